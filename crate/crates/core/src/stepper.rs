//! Baseline energy-quadratization steppers (Crank-Nicolson and BDF2).
//!
//! Both schemes treat ℒ₀ implicitly and freeze the coupling operator
//! `K̄u = g(φ̄)u + 𝐆(∇φ̄)·∇u` at an extrapolated state φ̄. The `q` update is
//! affine in the new φ, so it is eliminated and only the increment
//! `δ = φⁿ⁺¹ − φ_base` is solved for:
//!
//! ```text
//! (I + θ𝒢(ℒ₀ + K̄*K̄)) δ = −β 𝒢 (ℒ₀φ_base + K̄*q_base)
//! q̂ⁿ⁺¹ = q_base + K̄δ
//! ```
//!
//! CN: `θ = δt/2`, `β = δt`, base `(φⁿ, qⁿ)`, `φ̄ = 3/2 φⁿ − 1/2 φⁿ⁻¹`.
//! BDF2: `θ = β = 2δt/3`, base `((4φⁿ − φⁿ⁻¹)/3, (4qⁿ − qⁿ⁻¹)/3)`, `φ̄ = 2φⁿ − φⁿ⁻¹`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linsolve::{krylov_solve, LinearOperator, SolverOptions, SymbolPreconditioner};
use crate::models::ModelSpec;
use crate::spectral::{Grid, RealField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Cn,
    Bdf2,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Cn => "cn",
            SchemeKind::Bdf2 => "bdf2",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cn" => Ok(SchemeKind::Cn),
            "bdf2" => Ok(SchemeKind::Bdf2),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// `(φⁿ, qⁿ)` with one level of history.
///
/// At `step_index == 0` the history equals the current level.
#[derive(Debug, Clone)]
pub struct State {
    pub phi: RealField,
    pub q: RealField,
    pub phi_prev: RealField,
    pub q_prev: RealField,
    pub step_index: usize,
    pub time: f64,
}

impl State {
    /// Shifts the current level into history and installs the new one.
    pub fn commit(&self, phi_new: RealField, q_new: RealField, dt: f64) -> State {
        State {
            phi_prev: self.phi.clone(),
            q_prev: self.q.clone(),
            phi: phi_new,
            q: q_new,
            step_index: self.step_index + 1,
            time: self.time + dt,
        }
    }
}

/// Output of one baseline solve, before any relaxation.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// φⁿ⁺¹
    pub phi_hat: RealField,
    /// q̂ⁿ⁺¹
    pub q_hat: RealField,
    /// `D = (μ̂, 𝒢ₛμ̂) = (ℒΨ̂, 𝒩(Ψ̄)ℒΨ̂)` at the scheme's stage.
    pub dissipation: f64,
    pub solver_iters: usize,
    pub residual: f64,
}

/// Consistent initial state: `q⁰ = h(φ⁰)`, history equal to the current level.
pub fn init_state(spec: &ModelSpec, phi0: &RealField) -> Result<State> {
    if !phi0.is_finite() {
        return Err(Error::NonFinite {
            what: "initial phi".into(),
        });
    }
    let q0 = crate::models::h_field(spec, phi0)?;
    Ok(State {
        phi: phi0.clone(),
        q: q0.clone(),
        phi_prev: phi0.clone(),
        q_prev: q0,
        step_index: 0,
        time: 0.0,
    })
}

/// Extrapolated state `Ψ̄` for the given scheme.
pub fn extrapolate(state: &State, kind: SchemeKind) -> (RealField, RealField) {
    if state.step_index == 0 {
        return (state.phi.clone(), state.q.clone());
    }
    let (a, b) = match kind {
        SchemeKind::Cn => (1.5, -0.5),
        SchemeKind::Bdf2 => (2.0, -1.0),
    };
    let grid = state.phi.grid().clone();
    let phi = state.phi.values() * a + &(state.phi_prev.values() * b);
    let q = state.q.values() * a + &(state.q_prev.values() * b);
    (RealField::from_parts(grid.clone(), phi), RealField::from_parts(grid, q))
}

/// The frozen coupling `K̄u = g(φ̄)u + 𝐆(∇φ̄)·∇u` and its adjoint.
///
/// With dealiasing on, `K̄u = P(g u + 𝐆·∇u)` for the 2/3-rule projection
/// `P`, and the adjoint picks up `P` on its input.
pub struct Coupling {
    grid: Arc<Grid>,
    g: Array2<f64>,
    g2: Array2<f64>,
    gvec: Option<(Array2<f64>, Array2<f64>)>,
    dealias: bool,
}

impl Coupling {
    pub fn new(spec: &ModelSpec, phi_bar: &RealField, dealias: bool) -> Result<Self> {
        let grid = phi_bar.grid().clone();
        let g = spec.g_array(&grid, phi_bar.values())?;
        let gvec = spec.gvec_array(&grid, phi_bar.values());
        let g2 = g.mapv(|v| v * v);
        Ok(Self {
            grid,
            g,
            g2,
            gvec,
            dealias,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `K̄u`
    pub fn k(&self, u: &Array2<f64>) -> Array2<f64> {
        let mut out = &self.g * u;
        if let Some((vx, vy)) = &self.gvec {
            let (ux, uy) = self.grid.gradient_array(u);
            Zip::from(&mut out)
                .and(vx)
                .and(vy)
                .and(&ux)
                .and(&uy)
                .for_each(|o, &a, &b, &c, &d| *o += a * c + b * d);
        }
        if self.dealias {
            out = self.grid.dealias_field(&out);
        }
        out
    }

    /// `K̄*v = g v − ∇·(𝐆 v)`
    pub fn k_adjoint(&self, v: &Array2<f64>) -> Array2<f64> {
        let pv;
        let v = if self.dealias {
            pv = self.grid.dealias_field(v);
            &pv
        } else {
            v
        };
        let mut out = &self.g * v;
        if let Some((vx, vy)) = &self.gvec {
            let div = self.grid.divergence_array(&(vx * v), &(vy * v));
            out -= &div;
        }
        out
    }

    /// `K̄*K̄u`
    pub fn k_adjoint_k(&self, u: &Array2<f64>) -> Array2<f64> {
        if self.gvec.is_none() && !self.dealias {
            return &self.g2 * u;
        }
        self.k_adjoint(&self.k(u))
    }

    /// Spatial means of `g²` and of the entries of `𝐆𝐆ᵀ`, for the preconditioner.
    fn mean_coefficients(&self) -> (f64, f64, f64, f64) {
        let mean = |a: &Array2<f64>| a.mean().unwrap_or(0.0);
        let g2 = mean(&self.g2);
        match &self.gvec {
            Some((vx, vy)) => (g2, mean(&(vx * vx)), mean(&(vx * vy)), mean(&(vy * vy))),
            None => (g2, 0.0, 0.0, 0.0),
        }
    }
}

/// `𝒩₀f = (f, K̄f)`: a scalar test function mapped into the `(φ, q)` pairing.
pub fn apply_n0(spec: &ModelSpec, phi_bar: &RealField, f: &RealField) -> Result<(RealField, RealField)> {
    phi_bar.same_grid(f)?;
    let c = Coupling::new(spec, phi_bar, false)?;
    let kf = c.k(f.values());
    Ok((f.clone(), RealField::from_parts(f.grid().clone(), kf)))
}

/// `𝒩₀*(a, b) = a + K̄*b`, the adjoint of [`apply_n0`] in the pair inner product.
pub fn apply_n0_adjoint(spec: &ModelSpec, phi_bar: &RealField, pair: (&RealField, &RealField)) -> Result<RealField> {
    phi_bar.same_grid(pair.0)?;
    phi_bar.same_grid(pair.1)?;
    let c = Coupling::new(spec, phi_bar, false)?;
    let out = pair.0.values() + &c.k_adjoint(pair.1.values());
    Ok(RealField::from_parts(phi_bar.grid().clone(), out))
}

/// Per-model symbols on one grid.
pub struct Symbols {
    pub l0: Array2<f64>,
    pub mobility: Array2<f64>,
    /// Full mobility `𝒢ₛ + i𝒢ₐ`.
    pub mobility_full: Array2<Complex64>,
}

impl Symbols {
    pub fn new(spec: &ModelSpec, grid: &Grid) -> Self {
        let l0 = grid.symbol(|k| spec.l0_symbol(k));
        let mobility = grid.symbol(|k| spec.mobility_symbol(k));
        let skew = grid.symbol(|k| spec.skew_symbol(k));
        let mobility_full = Zip::from(&mobility)
            .and(&skew)
            .map_collect(|&m, &s| Complex64::new(m, s));
        Self {
            l0,
            mobility,
            mobility_full,
        }
    }
}

/// `A δ = δ + θ 𝒢 (ℒ₀ + K̄*K̄) δ`
struct StepOperator<'a> {
    grid: &'a Grid,
    symbols: &'a Symbols,
    coupling: &'a Coupling,
    theta: f64,
    pre: SymbolPreconditioner,
}

impl StepOperator<'_> {
    /// `(ℒ₀ + K̄*K̄)u` returned in spectral space.
    fn energy_hessian_spectrum(&self, u: &Array2<f64>) -> Array2<Complex64> {
        let w = self.coupling.k_adjoint_k(u);
        let (mut uh, wh) = self.grid.forward_pair(u, &w);
        Zip::from(&mut uh)
            .and(&wh)
            .and(&self.symbols.l0)
            .for_each(|a, &b, &l| *a = *a * l + b);
        uh
    }

    fn apply_array(&self, u: &Array2<f64>) -> Array2<f64> {
        let mut sh = self.energy_hessian_spectrum(u);
        sh *= &self.symbols.mobility_full;
        let s = self.grid.inverse(&sh);
        u + &(s * self.theta)
    }
}

impl LinearOperator for StepOperator<'_> {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let u = Array2::from_shape_vec(self.grid.shape(), x.to_vec()).expect("grid shape");
        let out = self.apply_array(&u);
        y.copy_from_slice(out.as_slice().expect("standard layout"));
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        self.pre.apply(r, z);
    }
}

/// Options shared by both baseline schemes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOptions {
    pub solver: SolverOptions,
    pub dealias: bool,
}

/// Baseline stepper bound to one model and grid.
pub struct Stepper {
    spec: ModelSpec,
    grid: Arc<Grid>,
    symbols: Symbols,
    options: StepOptions,
}

impl Stepper {
    pub fn new(spec: ModelSpec, grid: Arc<Grid>, options: StepOptions) -> Self {
        let symbols = Symbols::new(&spec, &grid);
        Self {
            spec,
            grid,
            symbols,
            options,
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn symbols(&self) -> &Symbols {
        &self.symbols
    }

    pub fn options(&self) -> &StepOptions {
        &self.options
    }

    pub fn step(&self, state: &State, kind: SchemeKind, dt: f64) -> Result<StepResult> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTimeStep(dt));
        }
        state.phi.same_grid(&RealField::zeros(self.grid.clone()))?;
        let (phi_bar, _) = extrapolate(state, kind);
        let coupling = Coupling::new(&self.spec, &phi_bar, self.options.dealias)?;
        let (theta, beta, phi_base, q_base) = match kind {
            SchemeKind::Cn => (0.5 * dt, dt, state.phi.values().clone(), state.q.values().clone()),
            // A history equal to the current level would make the BDF2
            // quotient 3(φ¹ − φ⁰)/2δt, which is inconsistent, so the first
            // step is a linearized backward-Euler step.
            SchemeKind::Bdf2 if state.step_index == 0 => (dt, dt, state.phi.values().clone(), state.q.values().clone()),
            SchemeKind::Bdf2 => {
                let third = 1.0 / 3.0;
                (
                    2.0 * dt / 3.0,
                    2.0 * dt / 3.0,
                    (state.phi.values() * 4.0 - state.phi_prev.values()) * third,
                    (state.q.values() * 4.0 - state.q_prev.values()) * third,
                )
            }
        };
        self.solve(&coupling, theta, beta, &phi_base, &q_base)
    }

    fn solve(
        &self,
        coupling: &Coupling,
        theta: f64,
        beta: f64,
        phi_base: &Array2<f64>,
        q_base: &Array2<f64>,
    ) -> Result<StepResult> {
        let grid = &*self.grid;
        let (g2, gxx, gxy, gyy) = coupling.mean_coefficients();
        let pre_symbol = Array2::from_shape_fn(grid.shape(), |(i, j)| {
            let k = grid.wavevector(i, j);
            let kk = g2 + gxx * k.kx_d1 * k.kx_d1 + 2.0 * gxy * k.kx_d1 * k.ky_d1 + gyy * k.ky_d1 * k.ky_d1;
            Complex64::new(1.0, 0.0) + self.symbols.mobility_full[[i, j]] * (theta * (self.symbols.l0[[i, j]] + kk))
        });
        let op = StepOperator {
            grid,
            symbols: &self.symbols,
            coupling,
            theta,
            pre: SymbolPreconditioner::new(self.grid.clone(), &pre_symbol),
        };

        // μ_base = ℒ₀φ_base + K̄*q_base
        let w = coupling.k_adjoint(q_base);
        let (mut mu_base_h, wh) = grid.forward_pair(phi_base, &w);
        Zip::from(&mut mu_base_h)
            .and(&wh)
            .and(&self.symbols.l0)
            .for_each(|a, &b, &l| *a = *a * l + b);
        let mut rhs_h = &mu_base_h * &self.symbols.mobility_full;
        rhs_h.mapv_inplace(|z| z * -beta);
        let rhs = grid.inverse(&rhs_h);

        let outcome = krylov_solve(
            &op,
            rhs.as_slice().expect("standard layout"),
            self.options.solver.tol,
            self.options.solver.max_iter,
        )?;
        let delta = Array2::from_shape_vec(grid.shape(), outcome.x).expect("grid shape");

        let phi_new = phi_base + &delta;
        let q_new = q_base + &coupling.k(&delta);
        if !(phi_new.iter().all(|v| v.is_finite()) && q_new.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite {
                what: "step produced NaN/Inf".into(),
            });
        }

        // μ̂ = μ_base + (θ/β)(ℒ₀ + K̄*K̄)δ
        let mut mu_h = op.energy_hessian_spectrum(&delta);
        let ratio = theta / beta;
        Zip::from(&mut mu_h)
            .and(&mu_base_h)
            .for_each(|m, &b| *m = *m * ratio + b);
        let dissipation = grid.quadratic_form(&mu_h, &self.symbols.mobility);

        Ok(StepResult {
            phi_hat: RealField::from_parts(self.grid.clone(), phi_new),
            q_hat: RealField::from_parts(self.grid.clone(), q_new),
            dissipation,
            solver_iters: outcome.iterations,
            residual: outcome.residual,
        })
    }
}

/// One baseline Crank-Nicolson step with default solver options.
pub fn step_cn(spec: &ModelSpec, state: &State, dt: f64) -> Result<StepResult> {
    Stepper::new(*spec, state.phi.grid().clone(), StepOptions::default()).step(state, SchemeKind::Cn, dt)
}

/// One baseline BDF2 step with default solver options.
pub fn step_bdf2(spec: &ModelSpec, state: &State, dt: f64) -> Result<StepResult> {
    Stepper::new(*spec, state.phi.grid().clone(), StepOptions::default()).step(state, SchemeKind::Bdf2, dt)
}

/// `½(φ, ℒ₀φ) + ½‖q‖²`
pub fn quadratic_energy(spec: &ModelSpec, phi: &RealField, q: &RealField) -> f64 {
    spec.modified_energy_array(phi.grid(), phi.values(), q.values())
}

/// Shifted BDF2 energy
/// `¼[(φⁿ,ℒ₀φⁿ) + (2φⁿ−φⁿ⁻¹, ℒ₀(2φⁿ−φⁿ⁻¹)) + ‖qⁿ‖² + ‖2qⁿ−qⁿ⁻¹‖²]`.
pub fn shifted_energy(spec: &ModelSpec, state: &State) -> f64 {
    let grid = state.phi.grid();
    let phi2 = state.phi.values() * 2.0 - state.phi_prev.values();
    let q2 = state.q.values() * 2.0 - state.q_prev.values();
    0.5 * (spec.modified_energy_array(grid, state.phi.values(), state.q.values())
        + spec.modified_energy_array(grid, &phi2, &q2))
}
