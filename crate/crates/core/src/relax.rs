//! Relaxation of the auxiliary field toward its definition.
//!
//! After a baseline step returns `(φⁿ⁺¹, q̂ⁿ⁺¹)` and its dissipation `D`,
//! the auxiliary field is replaced by
//!
//! ```text
//! qⁿ⁺¹ = ξ₀ q̂ⁿ⁺¹ + (1 − ξ₀) h(φⁿ⁺¹)
//! ```
//!
//! where `ξ₀` is the smallest `ξ ∈ [0, 1]` whose energy change stays within
//! the budget `δt·η·D`. Writing `q(ξ) = h + ξ d` with `d = q̂ − h`, the
//! constraint is the quadratic `aξ² + bξ + c ≤ 0`, and `ξ = 1` is feasible
//! because `a + b + c = −δt·η·D ≤ 0`.
//!
//! The coefficients are assembled from `d` and `h` rather than from
//! `‖h‖² − ‖q̂‖²`, so that `c = −(a + b) − δt·η·D` carries no cancellation
//! between large, nearly equal norms.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::models::{h_field, ModelSpec};
use crate::spectral::{Grid, RealField};

/// Quadratic coefficients of one relaxation step and the chosen `ξ₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub eta: f64,
    pub xi0: f64,
}

impl RelaxCoeffs {
    /// `aξ² + bξ + c`
    pub fn constraint(&self, xi: f64) -> f64 {
        (self.a * xi + self.b) * xi + self.c
    }

    /// Tolerance used for feasibility checks.
    pub fn tolerance(&self) -> f64 {
        feasibility_tolerance(self.a, self.b, self.c)
    }
}

/// Relative slack allowed on `aξ² + bξ + c ≤ 0`.
pub const FEASIBILITY_RTOL: f64 = 1e-12;

/// `a` below this fraction of `max(|b|, |c|)` is treated as zero.
pub const DEGENERATE_RTOL: f64 = 1e-14;

pub fn feasibility_tolerance(a: f64, b: f64, c: f64) -> f64 {
    FEASIBILITY_RTOL * (a.abs() + b.abs() + c.abs())
}

/// Smallest `ξ ∈ [0, 1]` with `aξ² + bξ + c ≤ 0`.
///
/// Requires `a ≥ 0` and `a + b + c ≤ tol`. The smaller root
/// `(−b − √(b² − 4ac))/(2a)` is computed in the cancellation-free form and
/// clamped to `[0, 1]`; a discriminant that is negative by roundoff is
/// clamped to zero. When `a` is negligible the constraint is linear:
/// `0` if `c ≤ tol`, otherwise `min(1, max(0, −c/b))` for `b < 0`, else `1`.
pub fn solve_xi(a: f64, b: f64, c: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::NonFinite {
            what: format!("relaxation coefficients ({a}, {b}, {c})"),
        });
    }
    if a < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "relaxation coefficient a = {a} is negative"
        )));
    }
    let tol = feasibility_tolerance(a, b, c);
    let at_one = a + b + c;
    if at_one > tol {
        return Err(Error::Infeasible { value: at_one, tol });
    }

    if a == 0.0 || a <= DEGENERATE_RTOL * b.abs().max(c.abs()) {
        let xi = if c <= tol {
            0.0
        } else if b < 0.0 {
            (-c / b).clamp(0.0, 1.0)
        } else {
            1.0
        };
        return Ok(xi);
    }

    let disc = (b * b - 4.0 * a * c).max(0.0);
    let sq = disc.sqrt();
    // q = −(b + sign(b)√disc)/2; roots are q/a and c/q.
    let root = if b >= 0.0 {
        let q = -0.5 * (b + sq);
        // q ≤ 0 here; the smaller root is q/a.
        q / a
    } else {
        let q = -0.5 * (b - sq);
        // q > 0; the smaller root is c/q.
        c / q
    };
    Ok(root.clamp(0.0, 1.0))
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::EtaOutOfRange(eta))
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTimeStep(dt))
    }
}

fn blend(xi: f64, q_hat: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    if xi == 1.0 {
        return q_hat.clone();
    }
    if xi == 0.0 {
        return h.clone();
    }
    q_hat * xi + &(h * (1.0 - xi))
}

/// Which constraint the relaxation enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxKind {
    /// `½‖q‖² − ½‖q̂‖² ≤ δt·η·D`
    Cn,
    /// `¼(‖q‖² + ‖2q − qⁿ‖²) − ¼(‖q̂‖² + ‖2q̂ − qⁿ‖²) ≤ δt·η·D`
    Bdf2,
}

/// Coefficients `(a, b, c)` for a given target `h`.
pub(crate) fn coefficients(
    grid: &Grid,
    kind: RelaxKind,
    q_hat: &Array2<f64>,
    h: &Array2<f64>,
    q_n: Option<&Array2<f64>>,
    budget: f64,
) -> (f64, f64, f64) {
    let d = q_hat - h;
    let dd = grid.inner(&d, &d);
    let (a, b) = match kind {
        RelaxKind::Cn => (0.5 * dd, grid.inner(&d, h)),
        RelaxKind::Bdf2 => {
            let q_n = q_n.expect("BDF2 relaxation needs qⁿ");
            let w = h * 2.0 - q_n;
            (1.25 * dd, 0.5 * grid.inner(&d, h) + grid.inner(&d, &w))
        }
    };
    (a, b, -(a + b) - budget)
}

/// Relaxes `q̂` toward the given target `h`; shared by both schemes.
pub fn relax_toward(
    grid: &Grid,
    kind: RelaxKind,
    q_hat: &Array2<f64>,
    h: &Array2<f64>,
    q_n: Option<&Array2<f64>>,
    dissipation: f64,
    dt: f64,
    eta: f64,
) -> Result<(Array2<f64>, RelaxCoeffs)> {
    check_eta(eta)?;
    check_dt(dt)?;
    // negative dissipation can only be roundoff
    let budget = dt * eta * dissipation.max(0.0);
    let (a, b, c) = coefficients(grid, kind, q_hat, h, q_n, budget);
    let xi0 = solve_xi(a, b, c)?;
    Ok((blend(xi0, q_hat, h), RelaxCoeffs { a, b, c, eta, xi0 }))
}

/// Relaxation step of the relaxed Crank-Nicolson scheme.
pub fn relax_cn(
    spec: &ModelSpec,
    q_hat: &RealField,
    phi_new: &RealField,
    dissipation: f64,
    dt: f64,
    eta: f64,
) -> Result<(RealField, RelaxCoeffs)> {
    q_hat.same_grid(phi_new)?;
    let h = h_field(spec, phi_new)?;
    let grid = q_hat.grid().clone();
    let (q, coeffs) = relax_toward(
        &grid,
        RelaxKind::Cn,
        q_hat.values(),
        h.values(),
        None,
        dissipation,
        dt,
        eta,
    )?;
    Ok((RealField::from_parts(grid, q), coeffs))
}

/// Relaxation step of the relaxed BDF2 scheme; `q_n` is the previous level.
pub fn relax_bdf2(
    spec: &ModelSpec,
    q_hat: &RealField,
    phi_new: &RealField,
    q_n: &RealField,
    dissipation: f64,
    dt: f64,
    eta: f64,
) -> Result<(RealField, RelaxCoeffs)> {
    q_hat.same_grid(phi_new)?;
    q_hat.same_grid(q_n)?;
    let h = h_field(spec, phi_new)?;
    let grid = q_hat.grid().clone();
    let (q, coeffs) = relax_toward(
        &grid,
        RelaxKind::Bdf2,
        q_hat.values(),
        h.values(),
        Some(q_n.values()),
        dissipation,
        dt,
        eta,
    )?;
    Ok((RealField::from_parts(grid, q), coeffs))
}

/// `ξ q̂ + (1 − ξ) h(φⁿ⁺¹)` for a prescribed `ξ`; `ξ = 1` returns `q̂` unchanged.
pub fn relax_fixed(spec: &ModelSpec, q_hat: &RealField, phi_new: &RealField, xi: f64) -> Result<RealField> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::InvalidParameter(format!("fixed xi = {xi} outside [0, 1]")));
    }
    q_hat.same_grid(phi_new)?;
    if xi == 1.0 {
        return Ok(q_hat.clone());
    }
    let h = h_field(spec, phi_new)?;
    let grid = q_hat.grid().clone();
    Ok(RealField::from_parts(grid, blend(xi, q_hat.values(), h.values())))
}
