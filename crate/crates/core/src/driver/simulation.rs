//! Time loop: baseline step, optional relaxation, commit, diagnostics.

use std::fs;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::models::{h_field, original_energy, ModelSpec};
use crate::relax::{relax_bdf2, relax_cn, relax_fixed, RelaxCoeffs};
use crate::spectral::{make_grid, Grid, RealField};
use crate::stepper::{
    init_state, quadratic_energy, shifted_energy, SchemeKind, State, StepOptions, StepResult, Stepper,
};

use super::config::RunConfig;
use super::io::{snapshot_name, write_snapshot, write_timeseries, TimeSeriesRow};
use super::presets::initial_field;

/// Relative slack for the per-step energy check in strict mode.
pub const ENERGY_RTOL: f64 = 1e-10;

/// How `q̂ⁿ⁺¹` becomes `qⁿ⁺¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Relaxation {
    /// Baseline scheme: `qⁿ⁺¹ = q̂ⁿ⁺¹`.
    Off,
    /// Optimal `ξ₀` with budget `η`.
    Eta(f64),
    /// Prescribed `ξ`.
    FixedXi(f64),
}

impl Relaxation {
    pub fn from_config(c: &RunConfig) -> Self {
        match (c.force_xi, c.relaxed) {
            (Some(xi), _) => Relaxation::FixedXi(xi),
            (None, true) => Relaxation::Eta(c.eta),
            (None, false) => Relaxation::Off,
        }
    }
}

/// Everything known about one completed step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub result: StepResult,
    pub coeffs: Option<RelaxCoeffs>,
    /// `ξ` actually applied (1 for the baseline scheme).
    pub xi0: f64,
    /// The scheme's Lyapunov functional before and after the step: the
    /// quadratic energy for CN, the shifted energy for BDF2.
    pub lyapunov_before: f64,
    pub lyapunov_after: f64,
}

impl StepReport {
    /// `(after − before) / max(|before|, 1)`
    pub fn relative_increase(&self) -> f64 {
        (self.lyapunov_after - self.lyapunov_before) / self.lyapunov_before.abs().max(1.0)
    }
}

/// A single simulation advanced one step at a time.
pub struct Simulation {
    stepper: Stepper,
    scheme: SchemeKind,
    relaxation: Relaxation,
    dt: f64,
    state: State,
    lyapunov: f64,
}

impl Simulation {
    pub fn new(
        spec: ModelSpec,
        phi0: &RealField,
        scheme: SchemeKind,
        relaxation: Relaxation,
        dt: f64,
        options: StepOptions,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTimeStep(dt));
        }
        let state = init_state(&spec, phi0)?;
        let lyapunov = lyapunov(&spec, &state, scheme);
        Ok(Self {
            stepper: Stepper::new(spec, phi0.grid().clone(), options),
            scheme,
            relaxation,
            dt,
            state,
            lyapunov,
        })
    }

    pub fn from_config(c: &RunConfig) -> Result<Self> {
        c.validate()?;
        let grid = make_grid(c.nx, c.ny, c.lx, c.ly)?;
        let phi0 = initial_field(c, &grid)?;
        Self::new(
            c.model_spec()?,
            &phi0,
            c.scheme,
            Relaxation::from_config(c),
            c.dt,
            c.step_options(),
        )
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn spec(&self) -> &ModelSpec {
        self.stepper.spec()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.stepper.grid()
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// The scheme's Lyapunov functional at the current state.
    pub fn lyapunov(&self) -> f64 {
        self.lyapunov
    }

    /// One step; the state is only replaced when every stage succeeds.
    pub fn advance(&mut self) -> Result<StepReport> {
        let spec = *self.spec();
        let before = self.lyapunov();
        let result = self.stepper.step(&self.state, self.scheme, self.dt)?;
        let (q_new, coeffs, xi0) = match self.relaxation {
            Relaxation::Off => (result.q_hat.clone(), None, 1.0),
            Relaxation::FixedXi(xi) => (relax_fixed(&spec, &result.q_hat, &result.phi_hat, xi)?, None, xi),
            Relaxation::Eta(eta) => {
                let (q, c) = match self.scheme {
                    SchemeKind::Cn => {
                        relax_cn(&spec, &result.q_hat, &result.phi_hat, result.dissipation, self.dt, eta)?
                    }
                    SchemeKind::Bdf2 => relax_bdf2(
                        &spec,
                        &result.q_hat,
                        &result.phi_hat,
                        &self.state.q,
                        result.dissipation,
                        self.dt,
                        eta,
                    )?,
                };
                let xi = c.xi0;
                (q, Some(c), xi)
            }
        };
        self.state = self.state.commit(result.phi_hat.clone(), q_new, self.dt);
        let after = lyapunov(&spec, &self.state, self.scheme);
        self.lyapunov = after;
        Ok(StepReport {
            result,
            coeffs,
            xi0,
            lyapunov_before: before,
            lyapunov_after: after,
        })
    }

    /// Diagnostics row for the current state.
    pub fn row(&self, report: Option<&StepReport>) -> Result<TimeSeriesRow> {
        diagnostics(self.spec(), &self.state, report)
    }
}

pub fn lyapunov(spec: &ModelSpec, state: &State, scheme: SchemeKind) -> f64 {
    match scheme {
        SchemeKind::Cn => quadratic_energy(spec, &state.phi, &state.q),
        SchemeKind::Bdf2 => shifted_energy(spec, state),
    }
}

/// `E_modified` (offset removed), `F_original`, mass and `‖q − h(φ)‖`.
pub fn diagnostics(spec: &ModelSpec, state: &State, report: Option<&StepReport>) -> Result<TimeSeriesRow> {
    let grid = state.phi.grid();
    let offset = spec.energy_offset(grid.area());
    let h = h_field(spec, &state.phi)?;
    let diff = state.q.values() - h.values();
    Ok(TimeSeriesRow {
        step: state.step_index,
        time: state.time,
        e_modified: quadratic_energy(spec, &state.phi, &state.q) - offset,
        f_original: original_energy(spec, &state.phi),
        mass: state.phi.integral(),
        xi0: report.map_or(1.0, |r| r.xi0),
        dissipation: report.map_or(0.0, |r| r.result.dissipation),
        solver_iters: report.map_or(0, |r| r.result.solver_iters),
        q_consistency: grid.inner(&diff, &diff).sqrt(),
    })
}

/// Outcome of [`run`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    pub final_time: f64,
    pub rows: Vec<TimeSeriesRow>,
    pub final_state: State,
    pub xi0_min: f64,
    pub xi0_max: f64,
    pub max_solver_iters: usize,
    /// Largest relative increase of the scheme's Lyapunov functional.
    pub max_energy_increase: f64,
    /// Largest `(aξ₀² + bξ₀ + c) / (|a| + |b| + |c|)` over relaxed steps.
    pub max_feasibility_residual: f64,
    pub wall_time: f64,
}

impl RunSummary {
    pub fn final_row(&self) -> &TimeSeriesRow {
        self.rows.last().expect("at least the initial row")
    }

    pub fn to_text(&self, c: &RunConfig) -> String {
        let last = self.final_row();
        let first = &self.rows[0];
        let mut s = c.to_string();
        s.push_str(&format!("steps = {}\n", self.steps));
        s.push_str(&format!("final_time = {}\n", self.final_time));
        s.push_str(&format!("E_modified_final = {}\n", last.e_modified));
        s.push_str(&format!("F_original_final = {}\n", last.f_original));
        s.push_str(&format!("q_consistency_final = {}\n", last.q_consistency));
        s.push_str(&format!("mass_initial = {}\n", first.mass));
        s.push_str(&format!("mass_final = {}\n", last.mass));
        s.push_str(&format!("xi0_min = {}\n", self.xi0_min));
        s.push_str(&format!("xi0_max = {}\n", self.xi0_max));
        s.push_str(&format!("max_solver_iters = {}\n", self.max_solver_iters));
        s.push_str(&format!("max_energy_increase = {:e}\n", self.max_energy_increase));
        s.push_str(&format!(
            "max_feasibility_residual = {:e}\n",
            self.max_feasibility_residual
        ));
        s.push_str(&format!("wall_time_s = {:.3}\n", self.wall_time));
        s
    }
}

/// Steps at which snapshots are due.
fn snapshot_steps(c: &RunConfig, steps: usize) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = c
        .snapshot_times
        .iter()
        .filter(|t| **t >= 0.0)
        .map(|t| (((t / c.dt).round() as usize).min(steps), *t))
        .collect();
    out.push((steps, steps as f64 * c.dt));
    out.sort_by_key(|a| a.0);
    out.dedup_by_key(|a| a.0);
    out
}

/// Runs a configuration to `t_end`, writing `series.csv`, snapshots and
/// `summary.txt` when an output directory is set.
///
/// On a failed step the last good state is written to
/// `snap_abort.pfield` and the error is returned.
pub fn run(c: &RunConfig) -> Result<RunSummary> {
    let start = Instant::now();
    let mut sim = Simulation::from_config(c)?;
    let steps = c.steps();
    if let Some(dir) = &c.output_dir {
        fs::create_dir_all(dir)?;
    }
    let snaps = snapshot_steps(c, steps);
    let mut next_snap = 0;
    let write_snap = |sim: &Simulation, next: &mut usize| -> Result<()> {
        while *next < snaps.len() && snaps[*next].0 == sim.state().step_index {
            if let Some(dir) = &c.output_dir {
                let t = sim.state().step_index as f64 * c.dt;
                write_snapshot(&sim.state().phi, t, &dir.join(snapshot_name(t)))?;
            }
            *next += 1;
        }
        Ok(())
    };

    let mut rows = vec![sim.row(None)?];
    write_snap(&sim, &mut next_snap)?;
    let (mut xi_min, mut xi_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut max_iters = 0;
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_feas = f64::NEG_INFINITY;

    for n in 1..=steps {
        let report = match sim.advance() {
            Ok(r) => r,
            Err(e) => {
                if let Some(dir) = &c.output_dir {
                    let s = sim.state();
                    let _ = write_snapshot(&s.phi, s.time, &dir.join("snap_abort.pfield"));
                    let _ = write_timeseries(&rows, &dir.join("series.csv"));
                }
                return Err(e);
            }
        };
        xi_min = xi_min.min(report.xi0);
        xi_max = xi_max.max(report.xi0);
        max_iters = max_iters.max(report.result.solver_iters);
        let inc = report.relative_increase();
        max_increase = max_increase.max(inc);
        if let Some(k) = &report.coeffs {
            let scale = k.a.abs() + k.b.abs() + k.c.abs();
            if scale > 0.0 {
                max_feas = max_feas.max(k.constraint(k.xi0) / scale);
            }
        }
        if c.strict && inc > ENERGY_RTOL {
            return Err(Error::InvariantViolation {
                step: n,
                what: format!("energy increased by {inc:e} (relative)"),
            });
        }
        if n % c.log_every == 0 {
            rows.push(sim.row(Some(&report))?);
        }
        write_snap(&sim, &mut next_snap)?;
    }

    let summary = RunSummary {
        steps,
        final_time: sim.state().time,
        rows,
        final_state: sim.state().clone(),
        xi0_min: xi_min,
        xi0_max: xi_max,
        max_solver_iters: max_iters,
        max_energy_increase: max_increase,
        max_feasibility_residual: if max_feas.is_finite() { max_feas } else { 0.0 },
        wall_time: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &c.output_dir {
        write_timeseries(&summary.rows, &dir.join("series.csv"))?;
        fs::write(dir.join("summary.txt"), summary.to_text(c))?;
    }
    Ok(summary)
}
