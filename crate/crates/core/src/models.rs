//! Quadratized gradient-flow models.
//!
//! A model is the triplet (φ, 𝒢, ℰ) rewritten with an auxiliary field
//! `q = h(φ, ∇φ)` so that the energy becomes
//! `E(φ, q) = ½(φ, ℒ₀φ) + ½‖q‖²`. The evolution is
//!
//! ```text
//! ∂ₜφ = −𝒢 μ,   μ = ℒ₀φ + q·g(φ) − ∇·(q 𝐆(∇φ)),
//! ∂ₜq = g(φ) ∂ₜφ + 𝐆(∇φ)·∇∂ₜφ,
//! ```
//!
//! with `g = ∂q/∂φ` and `𝐆 = ∂q/∂∇φ`. Four models are shipped: Allen-Cahn,
//! Cahn-Hilliard, molecular beam epitaxy with slope selection, and the
//! phase field crystal equation.
//!
//! Terms of ℒ₀ that come from `|∇φ|²` in the energy use the
//! first-derivative wavenumbers `|k̃|²`, so the quadratic form matches the
//! discrete energy built from the spectral gradient exactly (Nyquist
//! modes included).

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::spectral::{Grid, RealField, VectorField, Wavevector};

/// Minimum admissible PFC radicand.
pub const PFC_RADICAND_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    AllenCahn,
    CahnHilliard,
    Mbe,
    Pfc,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::AllenCahn => "ac",
            ModelKind::CahnHilliard => "ch",
            ModelKind::Mbe => "mbe",
            ModelKind::Pfc => "pfc",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ac" | "allen-cahn" => Ok(ModelKind::AllenCahn),
            "ch" | "cahn-hilliard" => Ok(ModelKind::CahnHilliard),
            "mbe" => Ok(ModelKind::Mbe),
            "pfc" => Ok(ModelKind::Pfc),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// Model constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    AllenCahn { eps: f64, gamma0: f64 },
    CahnHilliard { eps: f64, mobility: f64, gamma0: f64 },
    Mbe { eps: f64, mobility: f64, gamma0: f64 },
    Pfc { a0: f64, b0: f64, gamma0: f64, c0: f64 },
}

/// Optional skew-symmetric mobility 𝒢ₐ = c·∇ (a constant drift).
///
/// None of the shipped models use it; it exists so the step machinery
/// handles 𝒢 = 𝒢ₛ + 𝒢ₐ in general.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewDrift {
    pub cx: f64,
    pub cy: f64,
}

/// A quadratized model: symbols for ℒ₀ and 𝒢ₛ plus pointwise h, g, 𝐆.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub model: Model,
    pub skew: Option<SkewDrift>,
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn require_non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")))
    }
}

/// Allen-Cahn: `h = (φ² − 1 − γ₀)/√2`, `ℒ₀ = −ε²Δ + γ₀`, `𝒢 = 1`.
pub fn build_ac(eps: f64, gamma0: f64) -> Result<ModelSpec> {
    require_positive("eps", eps)?;
    require_non_negative("gamma0", gamma0)?;
    Ok(ModelSpec::new(Model::AllenCahn { eps, gamma0 }))
}

/// Cahn-Hilliard: same `h` as Allen-Cahn, conservative mobility `M|k|²`.
pub fn build_ch(eps: f64, mobility: f64, gamma0: f64) -> Result<ModelSpec> {
    require_positive("eps", eps)?;
    require_positive("mobility", mobility)?;
    require_non_negative("gamma0", gamma0)?;
    Ok(ModelSpec::new(Model::CahnHilliard { eps, mobility, gamma0 }))
}

/// MBE with slope selection: `q = (|∇φ|² − 1 − γ₀)/√2`, `𝐆 = √2∇φ`,
/// `ℒ₀ = ε²Δ² − γ₀Δ`, `𝒢 = M`.
pub fn build_mbe(eps: f64, mobility: f64, gamma0: f64) -> Result<ModelSpec> {
    require_positive("eps", eps)?;
    require_positive("mobility", mobility)?;
    require_non_negative("gamma0", gamma0)?;
    Ok(ModelSpec::new(Model::Mbe { eps, mobility, gamma0 }))
}

/// Smallest `C₀` keeping the PFC radicand at or above the floor.
pub fn pfc_min_c0(b0: f64, gamma0: f64) -> f64 {
    let s = (b0 + gamma0).max(0.0);
    s * s / 4.0 + PFC_RADICAND_FLOOR
}

/// Phase field crystal: `q = √2·√(φ⁴/4 − (b₀+γ₀)φ²/2 + C₀)`,
/// `ℒ₀ = (a₀ + Δ)² + γ₀`, mobility `|k|²`.
///
/// `c0 = None` picks `(b₀+γ₀)²/4 + 1`.
pub fn build_pfc(a0: f64, b0: f64, gamma0: f64, c0: Option<f64>) -> Result<ModelSpec> {
    if !(a0.is_finite() && b0.is_finite()) {
        return Err(Error::InvalidParameter("a0 and b0 must be finite".into()));
    }
    require_non_negative("gamma0", gamma0)?;
    let c0 = match c0 {
        Some(c) => {
            let min = pfc_min_c0(b0, gamma0);
            if !(c >= min) {
                return Err(Error::PfcConstantTooSmall { c0: c, min });
            }
            c
        }
        None => (b0 + gamma0).powi(2) / 4.0 + 1.0,
    };
    Ok(ModelSpec::new(Model::Pfc { a0, b0, gamma0, c0 }))
}

impl ModelSpec {
    pub fn new(model: Model) -> Self {
        Self { model, skew: None }
    }

    pub fn with_skew_drift(mut self, cx: f64, cy: f64) -> Self {
        self.skew = Some(SkewDrift { cx, cy });
        self
    }

    pub fn kind(&self) -> ModelKind {
        match self.model {
            Model::AllenCahn { .. } => ModelKind::AllenCahn,
            Model::CahnHilliard { .. } => ModelKind::CahnHilliard,
            Model::Mbe { .. } => ModelKind::Mbe,
            Model::Pfc { .. } => ModelKind::Pfc,
        }
    }

    pub fn gamma0(&self) -> f64 {
        match self.model {
            Model::AllenCahn { gamma0, .. }
            | Model::CahnHilliard { gamma0, .. }
            | Model::Mbe { gamma0, .. }
            | Model::Pfc { gamma0, .. } => gamma0,
        }
    }

    /// Whether `q` depends on `∇φ` (so 𝐆 is nonzero).
    pub fn uses_gradient(&self) -> bool {
        matches!(self.model, Model::Mbe { .. })
    }

    /// Whether the mobility annihilates the mean (mass-conserving flow).
    pub fn is_conservative(&self) -> bool {
        matches!(self.model, Model::CahnHilliard { .. } | Model::Pfc { .. })
    }

    /// Symbol of ℒ₀.
    pub fn l0_symbol(&self, k: Wavevector) -> f64 {
        match self.model {
            Model::AllenCahn { eps, gamma0 } | Model::CahnHilliard { eps, gamma0, .. } => {
                eps * eps * k.norm2_d1() + gamma0
            }
            Model::Mbe { eps, gamma0, .. } => {
                let k2 = k.norm2();
                eps * eps * k2 * k2 + gamma0 * k.norm2_d1()
            }
            Model::Pfc { a0, gamma0, .. } => {
                let s = a0 - k.norm2();
                s * s + gamma0
            }
        }
    }

    /// Symbol of the symmetric mobility 𝒢ₛ (non-negative).
    pub fn mobility_symbol(&self, k: Wavevector) -> f64 {
        match self.model {
            Model::AllenCahn { .. } => 1.0,
            Model::CahnHilliard { mobility, .. } => mobility * k.norm2(),
            Model::Mbe { mobility, .. } => mobility,
            Model::Pfc { .. } => k.norm2(),
        }
    }

    /// Imaginary part of the skew mobility symbol, `𝒢ₐ ↔ i·s(k)`.
    pub fn skew_symbol(&self, k: Wavevector) -> f64 {
        self.skew.map(|d| d.cx * k.kx_d1 + d.cy * k.ky_d1).unwrap_or(0.0)
    }

    fn pfc_radicand(phi: f64, b0: f64, gamma0: f64, c0: f64) -> f64 {
        let p2 = phi * phi;
        0.25 * p2 * p2 - 0.5 * (b0 + gamma0) * p2 + c0
    }

    /// `q = h(φ, ∇φ)` at one point.
    pub fn h(&self, phi: f64, gx: f64, gy: f64) -> f64 {
        match self.model {
            Model::AllenCahn { gamma0, .. } | Model::CahnHilliard { gamma0, .. } => (phi * phi - 1.0 - gamma0) / SQRT_2,
            Model::Mbe { gamma0, .. } => (gx * gx + gy * gy - 1.0 - gamma0) / SQRT_2,
            Model::Pfc { b0, gamma0, c0, .. } => SQRT_2 * Self::pfc_radicand(phi, b0, gamma0, c0).sqrt(),
        }
    }

    /// `g = ∂q/∂φ` at one point.
    pub fn g(&self, phi: f64, _gx: f64, _gy: f64) -> f64 {
        match self.model {
            Model::AllenCahn { .. } | Model::CahnHilliard { .. } => SQRT_2 * phi,
            Model::Mbe { .. } => 0.0,
            Model::Pfc { b0, gamma0, c0, .. } => {
                (phi * phi * phi - (b0 + gamma0) * phi) / (SQRT_2 * Self::pfc_radicand(phi, b0, gamma0, c0).sqrt())
            }
        }
    }

    /// `𝐆 = ∂q/∂∇φ` at one point.
    pub fn gvec(&self, _phi: f64, gx: f64, gy: f64) -> (f64, f64) {
        match self.model {
            Model::Mbe { .. } => (SQRT_2 * gx, SQRT_2 * gy),
            _ => (0.0, 0.0),
        }
    }

    /// Original (non-quadratized) energy density.
    pub fn energy_density(&self, phi: f64, gx: f64, gy: f64, lap: f64) -> f64 {
        match self.model {
            Model::AllenCahn { eps, .. } | Model::CahnHilliard { eps, .. } => {
                let w = phi * phi - 1.0;
                0.5 * eps * eps * (gx * gx + gy * gy) + 0.25 * w * w
            }
            Model::Mbe { eps, .. } => {
                let w = gx * gx + gy * gy - 1.0;
                0.5 * eps * eps * lap * lap + 0.25 * w * w
            }
            Model::Pfc { a0, b0, .. } => {
                let s = a0 * phi + lap;
                let p2 = phi * phi;
                0.5 * s * s - 0.5 * b0 * p2 + 0.25 * p2 * p2
            }
        }
    }

    /// `modified_energy(φ, h(φ)) − original_energy(φ)`, a constant.
    pub fn energy_offset(&self, area: f64) -> f64 {
        match self.model {
            Model::AllenCahn { gamma0, .. } | Model::CahnHilliard { gamma0, .. } | Model::Mbe { gamma0, .. } => {
                area * (0.5 * gamma0 + 0.25 * gamma0 * gamma0)
            }
            Model::Pfc { c0, .. } => area * c0,
        }
    }

    fn check_radicand(&self, phi: &Array2<f64>) -> Result<()> {
        if let Model::Pfc { b0, gamma0, c0, .. } = self.model {
            let mut min = f64::INFINITY;
            let mut at = 0.0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &p in phi.iter() {
                let r = Self::pfc_radicand(p, b0, gamma0, c0);
                if r < min {
                    min = r;
                    at = p;
                }
                lo = lo.min(p);
                hi = hi.max(p);
            }
            if !(min >= PFC_RADICAND_FLOOR) {
                return Err(Error::RadicandTooSmall {
                    threshold: PFC_RADICAND_FLOOR,
                    min,
                    phi_at_min: at,
                    phi_min: lo,
                    phi_max: hi,
                });
            }
        }
        Ok(())
    }

    fn check_finite(phi: &Array2<f64>) -> Result<()> {
        if phi.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { what: "phi".into() })
        }
    }

    fn gradient_or_zero(&self, grid: &Grid, phi: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        if self.uses_gradient() {
            grid.gradient_array(phi)
        } else {
            let z = Array2::zeros(phi.dim());
            (z.clone(), z)
        }
    }

    pub(crate) fn h_array(&self, grid: &Grid, phi: &Array2<f64>) -> Result<Array2<f64>> {
        Self::check_finite(phi)?;
        self.check_radicand(phi)?;
        let (gx, gy) = self.gradient_or_zero(grid, phi);
        Ok(Zip::from(phi)
            .and(&gx)
            .and(&gy)
            .map_collect(|&p, &x, &y| self.h(p, x, y)))
    }

    pub(crate) fn g_array(&self, grid: &Grid, phi: &Array2<f64>) -> Result<Array2<f64>> {
        Self::check_finite(phi)?;
        self.check_radicand(phi)?;
        if matches!(self.model, Model::Mbe { .. }) {
            return Ok(Array2::zeros(phi.dim()));
        }
        let _ = grid;
        Ok(phi.mapv(|p| self.g(p, 0.0, 0.0)))
    }

    pub(crate) fn gvec_array(&self, grid: &Grid, phi: &Array2<f64>) -> Option<(Array2<f64>, Array2<f64>)> {
        if !self.uses_gradient() {
            return None;
        }
        let (gx, gy) = grid.gradient_array(phi);
        let (vx, vy): (Vec<f64>, Vec<f64>) = Zip::from(phi)
            .and(&gx)
            .and(&gy)
            .map_collect(|&p, &x, &y| self.gvec(p, x, y))
            .into_iter()
            .unzip();
        let shape = phi.dim();
        Some((
            Array2::from_shape_vec(shape, vx).expect("shape"),
            Array2::from_shape_vec(shape, vy).expect("shape"),
        ))
    }

    pub(crate) fn original_energy_array(&self, grid: &Grid, phi: &Array2<f64>) -> f64 {
        let fh = grid.forward(phi);
        let (gx, gy) = grid.gradient_from_spectrum(&fh);
        let lap = if matches!(self.model, Model::Mbe { .. } | Model::Pfc { .. }) {
            let mut lh = fh;
            for ((i, j), z) in lh.indexed_iter_mut() {
                *z *= -grid.wavevector(i, j).norm2();
            }
            grid.inverse(&lh)
        } else {
            Array2::zeros(phi.dim())
        };
        let mut sum = 0.0;
        Zip::from(phi)
            .and(&gx)
            .and(&gy)
            .and(&lap)
            .for_each(|&p, &x, &y, &l| sum += self.energy_density(p, x, y, l));
        sum * grid.cell_weight()
    }

    /// `½(φ, ℒ₀φ)`.
    pub(crate) fn l0_quadratic(&self, grid: &Grid, phi: &Array2<f64>) -> f64 {
        let fh = grid.forward(phi);
        let sym = grid.symbol(|k| self.l0_symbol(k));
        0.5 * grid.quadratic_form(&fh, &sym)
    }

    pub(crate) fn modified_energy_array(&self, grid: &Grid, phi: &Array2<f64>, q: &Array2<f64>) -> f64 {
        self.l0_quadratic(grid, phi) + 0.5 * grid.inner(q, q)
    }

    pub(crate) fn chemical_potential_array(
        &self,
        grid: &Grid,
        phi: &Array2<f64>,
        q: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let l0 = grid.symbol(|k| self.l0_symbol(k));
        let mut mu = grid.apply_symbol(phi, &l0);
        let g = self.g_array(grid, phi)?;
        Zip::from(&mut mu).and(q).and(&g).for_each(|m, &qq, &gg| *m += qq * gg);
        if let Some((vx, vy)) = self.gvec_array(grid, phi) {
            let div = grid.divergence_array(&(&vx * q), &(&vy * q));
            mu -= &div;
        }
        Ok(mu)
    }
}

/// Evaluates `h` on the grid.
pub fn h_field(spec: &ModelSpec, phi: &RealField) -> Result<RealField> {
    let grid = phi.grid().clone();
    let v = spec.h_array(&grid, phi.values())?;
    Ok(RealField::from_parts(grid, v))
}

pub fn g_field(spec: &ModelSpec, phi: &RealField) -> Result<RealField> {
    let grid = phi.grid().clone();
    let v = spec.g_array(&grid, phi.values())?;
    Ok(RealField::from_parts(grid, v))
}

/// `𝐆(∇φ)`; identically zero for models whose `q` ignores `∇φ`.
pub fn gvec_field(spec: &ModelSpec, phi: &RealField) -> Result<VectorField> {
    let grid = phi.grid().clone();
    if !phi.is_finite() {
        return Err(Error::NonFinite { what: "phi".into() });
    }
    let (vx, vy) = spec
        .gvec_array(&grid, phi.values())
        .unwrap_or_else(|| (Array2::zeros(grid.shape()), Array2::zeros(grid.shape())));
    VectorField::new(RealField::from_parts(grid.clone(), vx), RealField::from_parts(grid, vy))
}

/// Discrete quadrature of the original energy density (no bookkeeping constants).
pub fn original_energy(spec: &ModelSpec, phi: &RealField) -> f64 {
    spec.original_energy_array(phi.grid(), phi.values())
}

/// `½(φ, ℒ₀φ) + ½‖q‖²`, i.e. the quadratized energy plus `A₀`.
pub fn modified_energy(spec: &ModelSpec, phi: &RealField, q: &RealField) -> Result<f64> {
    phi.same_grid(q)?;
    Ok(spec.modified_energy_array(phi.grid(), phi.values(), q.values()))
}

/// `μ = ℒ₀φ + q·g(φ) − ∇·(q 𝐆(∇φ))`.
pub fn chemical_potential(spec: &ModelSpec, phi: &RealField, q: &RealField) -> Result<RealField> {
    phi.same_grid(q)?;
    let grid = phi.grid().clone();
    let mu = spec.chemical_potential_array(&grid, phi.values(), q.values())?;
    Ok(RealField::from_parts(grid, mu))
}
