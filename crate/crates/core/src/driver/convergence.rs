//! Temporal self-convergence against a fine-step reference.

use std::fmt;
use std::thread;

use crate::error::{Error, Result};
use crate::spectral::RealField;
use crate::stepper::SchemeKind;

use super::config::RunConfig;
use super::simulation::run;

/// Reference runs use this fraction of the smallest study step.
pub const REFERENCE_REFINEMENT: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    /// `‖φ(T) − φ_ref(T)‖` in the discrete L² norm.
    pub error: f64,
    /// `error(2·dt) / error(dt)`; absent on the first row.
    pub ratio: Option<f64>,
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub reference_dt: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.ratio).collect()
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# reference dt = {:e}", self.reference_dt)?;
        writeln!(f, "dt,error,ratio,order")?;
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
            writeln!(f, "{:e},{:e},{},{}", r.dt, r.error, opt(r.ratio), opt(r.order))?;
        }
        Ok(())
    }
}

/// Final `φ` of `c` run with step `dt`, no files written.
pub fn final_phi(c: &RunConfig, dt: f64) -> Result<RealField> {
    let mut c = c.clone();
    c.dt = dt;
    c.output_dir = None;
    c.snapshot_times.clear();
    c.log_every = usize::MAX;
    Ok(run(&c)?.final_state.phi)
}

/// The reference: relaxed CN with `η = 1` at `dt`.
pub fn reference_solution(c: &RunConfig, dt: f64) -> Result<RealField> {
    let mut r = c.clone();
    r.scheme = SchemeKind::Cn;
    r.relaxed = true;
    r.eta = 1.0;
    r.force_xi = None;
    final_phi(&r, dt)
}

fn check_dt_list(c: &RunConfig, dts: &[f64]) -> Result<()> {
    if dts.len() < 3 {
        return Err(Error::Config("convergence study needs at least 3 time steps".into()));
    }
    for w in dts.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "time steps must halve successively, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    for &dt in dts {
        let n = c.t_end / dt;
        if (n - n.round()).abs() > 1e-6 * n {
            return Err(Error::Config(format!(
                "t_end = {} is not a multiple of dt = {dt}",
                c.t_end
            )));
        }
    }
    Ok(())
}

/// Runs every step size in `dts` (in parallel) and compares with `reference`.
pub fn convergence_study_against(c: &RunConfig, dts: &[f64], reference: &RealField) -> Result<ConvergenceTable> {
    check_dt_list(c, dts)?;
    let results: Vec<Result<RealField>> = thread::scope(|s| {
        let handles: Vec<_> = dts.iter().map(|&dt| s.spawn(move || final_phi(c, dt))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("convergence worker panicked"))
            .collect()
    });
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(dts.len());
    for (dt, phi) in dts.iter().zip(results) {
        let phi = phi?;
        phi.same_grid(reference)?;
        let diff = phi.values() - reference.values();
        let error = phi.grid().inner(&diff, &diff).sqrt();
        let ratio = rows.last().map(|p: &ConvergenceRow| p.error / error);
        rows.push(ConvergenceRow {
            dt: *dt,
            error,
            ratio,
            order: ratio.map(f64::log2),
        });
    }
    Ok(ConvergenceTable {
        reference_dt: f64::NAN,
        rows,
    })
}

/// Errors for each step in `dts` against a relaxed-CN reference at
/// `min(dts) / 64`.
pub fn convergence_study(c: &RunConfig, dts: &[f64]) -> Result<ConvergenceTable> {
    check_dt_list(c, dts)?;
    let finest = dts.iter().copied().fold(f64::INFINITY, f64::min);
    let ref_dt = finest / REFERENCE_REFINEMENT;
    let reference = reference_solution(c, ref_dt)?;
    let mut table = convergence_study_against(c, dts, &reference)?;
    table.reference_dt = ref_dt;
    Ok(table)
}

/// `dt0, dt0/2, …` with `halvings + 1` entries.
pub fn halving_sequence(dt0: f64, halvings: usize) -> Vec<f64> {
    (0..=halvings).map(|k| dt0 / 2f64.powi(k as i32)).collect()
}
