//! Initial conditions and default run parameters.
//!
//! None of these are published values: disk layout, MBE data and PFC
//! patches are reconstructions of the usual benchmark setups, and
//! `describe` prints the exact formulas used.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::spectral::{Grid, RealField};
use crate::stepper::SchemeKind;

use super::config::RunConfig;
use super::io::read_snapshot;

use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    SevenDisks,
    MbeBenchmark,
    PfcBlocks,
    /// `0.1 sin(2πx/lx) sin(2πy/ly)`; used by convergence studies.
    Smooth,
    /// Smooth data or a `.pfield` file given by `init_file`.
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::SevenDisks,
        Preset::MbeBenchmark,
        Preset::PfcBlocks,
        Preset::Smooth,
        Preset::Custom,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::SevenDisks => "seven_disks",
            Preset::MbeBenchmark => "mbe_benchmark",
            Preset::PfcBlocks => "pfc_blocks",
            Preset::Smooth => "smooth",
            Preset::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A disk of radius `r` centred at `(cx, cy)` in the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

pub const SEVEN_DISKS: [Disk; 7] = [
    Disk {
        cx: 0.25,
        cy: 0.25,
        r: 0.10,
    },
    Disk {
        cx: 0.75,
        cy: 0.25,
        r: 0.08,
    },
    Disk {
        cx: 0.50,
        cy: 0.50,
        r: 0.12,
    },
    Disk {
        cx: 0.25,
        cy: 0.75,
        r: 0.06,
    },
    Disk {
        cx: 0.75,
        cy: 0.75,
        r: 0.11,
    },
    Disk {
        cx: 0.50,
        cy: 0.15,
        r: 0.05,
    },
    Disk {
        cx: 0.50,
        cy: 0.85,
        r: 0.04,
    },
];

pub const SEVEN_DISKS_EPS: f64 = 0.015;
pub const SEVEN_DISKS_CH_MOBILITY: f64 = 1e-3;

/// Periodic minimum-image distance along one axis.
fn periodic_delta(a: f64, b: f64, l: f64) -> f64 {
    let d = (a - b).rem_euclid(l);
    d.min(l - d)
}

/// `φ₀ = −1 + Σᵢ [1 + tanh((rᵢ − |x − cᵢ|)/(√2 ε))]`, disks scaled to the box.
pub fn seven_disks(grid: &Arc<Grid>, eps: f64) -> RealField {
    let (lx, ly) = (grid.lx(), grid.ly());
    RealField::from_fn(grid.clone(), |x, y| {
        -1.0 + SEVEN_DISKS
            .iter()
            .map(|d| {
                let dx = periodic_delta(x, d.cx * lx, lx);
                let dy = periodic_delta(y, d.cy * ly, ly);
                let dist = dx.hypot(dy);
                1.0 + ((d.r * lx.min(ly) - dist) / (SQRT_2 * eps)).tanh()
            })
            .sum::<f64>()
    })
}

/// `φ₀ = 0.1 (sin 3x sin 2y + sin 5x sin 5y)` on `[0, 2π]²`.
pub fn mbe_benchmark(grid: &Arc<Grid>) -> RealField {
    RealField::from_fn(grid.clone(), |x, y| {
        0.1 * ((3.0 * x).sin() * (2.0 * y).sin() + (5.0 * x).sin() * (5.0 * y).sin())
    })
}

pub fn smooth(grid: &Arc<Grid>) -> RealField {
    let (kx, ky) = (2.0 * PI / grid.lx(), 2.0 * PI / grid.ly());
    RealField::from_fn(grid.clone(), |x, y| 0.1 * (kx * x).sin() * (ky * y).sin())
}

/// An axis-aligned rectangle (fractions of the box) filled with a rotated
/// triangular lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrystalPatch {
    pub cx: f64,
    pub cy: f64,
    pub half_w: f64,
    pub half_h: f64,
    pub angle: f64,
}

pub const PFC_PATCHES: [CrystalPatch; 3] = [
    CrystalPatch {
        cx: 0.25,
        cy: 0.30,
        half_w: 0.10,
        half_h: 0.08,
        angle: 0.0,
    },
    CrystalPatch {
        cx: 0.72,
        cy: 0.28,
        half_w: 0.08,
        half_h: 0.10,
        angle: PI / 9.0,
    },
    CrystalPatch {
        cx: 0.50,
        cy: 0.75,
        half_w: 0.10,
        half_h: 0.08,
        angle: -PI / 12.0,
    },
];

pub const PFC_BACKGROUND: f64 = 0.285;
pub const PFC_B0: f64 = 0.25;
/// 256 points with spacing π/4.
pub const PFC_BOX: f64 = 64.0 * PI;

/// One-mode amplitude `(4/5)(φ̄ + √(15 b₀ − 36 φ̄²)/3)`; the square root is
/// clipped at zero outside the triangular-phase window.
pub fn pfc_amplitude(mean: f64, b0: f64) -> f64 {
    0.8 * (mean + (15.0 * b0 - 36.0 * mean * mean).max(0.0).sqrt() / 3.0)
}

/// `cos(q x') cos(q y'/√3) − ½ cos(2q y'/√3)` with `q = √3/2` and `(x', y')`
/// rotated by `angle`; its reciprocal vectors have unit length.
pub fn triangular_mode(x: f64, y: f64, angle: f64) -> f64 {
    let q = 3f64.sqrt() / 2.0;
    let (s, c) = angle.sin_cos();
    let xr = c * x + s * y;
    let yr = -s * x + c * y;
    let s3 = 3f64.sqrt();
    (q * xr).cos() * (q * yr / s3).cos() - 0.5 * (2.0 * q * yr / s3).cos()
}

/// Width of the tanh taper at patch edges. Sharp edges would seed
/// grid-scale modes that Crank-Nicolson does not damp.
pub const PFC_EDGE_WIDTH: f64 = 2.0;

/// `½(1 − tanh(d/w))` for the signed distance `d` outside an edge.
fn taper(d: f64) -> f64 {
    0.5 * (1.0 - (d / PFC_EDGE_WIDTH).tanh())
}

/// Background `φ̄` plus three tapered crystal patches of amplitude
/// `pfc_amplitude(φ̄, b₀)`.
pub fn pfc_blocks(grid: &Arc<Grid>, mean: f64, b0: f64) -> RealField {
    let amp = pfc_amplitude(mean, b0);
    let (lx, ly) = (grid.lx(), grid.ly());
    RealField::from_fn(grid.clone(), |x, y| {
        let mut v = mean;
        for p in &PFC_PATCHES {
            let (dx, dy) = (x - p.cx * lx, y - p.cy * ly);
            let w = taper(dx.abs() - p.half_w * lx) * taper(dy.abs() - p.half_h * ly);
            v += amp * w * triangular_mode(dx, dy, p.angle);
        }
        v
    })
}

/// Fills grid, time-step and model defaults for the preset in `c`.
pub(crate) fn apply_defaults(c: &mut RunConfig) {
    match c.preset {
        Preset::SevenDisks => {
            c.nx = 128;
            c.ny = 128;
            c.params.eps = SEVEN_DISKS_EPS;
            if c.model == ModelKind::CahnHilliard {
                c.dt = 0.005;
                c.t_end = 100.0;
                c.log_every = 20;
                c.snapshot_times = vec![0.0, 10.0, 50.0, 100.0];
            } else {
                c.dt = 0.75;
                c.t_end = 60.0;
                c.snapshot_times = vec![0.0, 10.0, 50.0, 60.0];
            }
        }
        Preset::MbeBenchmark => {
            c.nx = 128;
            c.ny = 128;
            c.lx = 2.0 * PI;
            c.ly = 2.0 * PI;
            c.dt = 0.001;
            c.t_end = 5.0;
            c.log_every = 10;
            c.snapshot_times = vec![0.0, 1.0, 5.0];
        }
        Preset::PfcBlocks => {
            c.nx = 256;
            c.ny = 256;
            c.lx = PFC_BOX;
            c.ly = PFC_BOX;
            c.params.a0 = 1.0;
            c.params.b0 = PFC_B0;
            c.dt = 0.1;
            c.t_end = 100.0;
            c.log_every = 10;
            c.snapshot_times = vec![0.0, 50.0, 75.0, 100.0];
        }
        Preset::Smooth => {
            c.nx = 64;
            c.ny = 64;
            c.params.eps = 0.05;
            c.dt = 0.01;
            c.t_end = 0.5;
            c.scheme = SchemeKind::Cn;
        }
        Preset::Custom => {}
    }
}

/// The preset's initial field on `grid`.
pub fn initial_field(c: &RunConfig, grid: &Arc<Grid>) -> Result<RealField> {
    Ok(match c.preset {
        Preset::SevenDisks => seven_disks(grid, c.params.eps),
        Preset::MbeBenchmark => mbe_benchmark(grid),
        Preset::PfcBlocks => pfc_blocks(grid, PFC_BACKGROUND, c.params.b0),
        Preset::Smooth => smooth(grid),
        Preset::Custom => match &c.init_file {
            None => smooth(grid),
            Some(path) => {
                let field = read_snapshot(path)?.into_field()?;
                if **field.grid() != **grid {
                    return Err(Error::Config(format!(
                        "{} does not match the configured grid {}x{} on {}x{}",
                        path.display(),
                        grid.nx(),
                        grid.ny(),
                        grid.lx(),
                        grid.ly()
                    )));
                }
                RealField::new(grid.clone(), field.into_values())?
            }
        },
    })
}

/// Human-readable formula and parameters of a preset.
pub fn describe(preset: Preset) -> String {
    let mut s = String::new();
    let c = RunConfig::for_preset(preset, None);
    match preset {
        Preset::SevenDisks => {
            s.push_str("seven_disks (reconstructed layout)\n");
            s.push_str("phi0(x) = -1 + sum_i [1 + tanh((r_i - |x - c_i|) / (sqrt(2) eps))]\n");
            s.push_str("|x - c_i| uses the periodic minimum image; centres and radii are fractions of the box\n");
            s.push_str("  i    cx     cy     r\n");
            for (i, d) in SEVEN_DISKS.iter().enumerate() {
                s.push_str(&format!("  {}  {:.3}  {:.3}  {:.3}\n", i + 1, d.cx, d.cy, d.r));
            }
            s.push_str(&format!(
                "eps = {SEVEN_DISKS_EPS}; AC: dt = 0.75, t_end = 60; CH: mobility = {SEVEN_DISKS_CH_MOBILITY}, dt = 0.005, t_end = 100\n"
            ));
        }
        Preset::MbeBenchmark => {
            s.push_str("mbe_benchmark (reconstructed benchmark)\n");
            s.push_str("phi0(x, y) = 0.1 (sin 3x sin 2y + sin 5x sin 5y) on [0, 2pi]^2\n");
        }
        Preset::PfcBlocks => {
            s.push_str("pfc_blocks (reconstructed setup)\n");
            s.push_str("phi0 = m + sum over patches of A * W(x - p_c, y - p_c) * T(x - p_c, y - p_c; theta)\n");
            s.push_str(&format!(
                "W = S(|x| - half_w) S(|y| - half_h), S(d) = 0.5 (1 - tanh(d / {PFC_EDGE_WIDTH}))\n"
            ));
            s.push_str("T(x, y; theta) = cos(q x') cos(q y'/sqrt3) - 0.5 cos(2 q y'/sqrt3), q = sqrt3/2, (x', y') = R(theta)(x, y)\n");
            s.push_str("A = 0.8 (m + sqrt(15 b0 - 36 m^2) / 3)\n");
            s.push_str(&format!(
                "m = {PFC_BACKGROUND}, b0 = {PFC_B0}, A = {:.6}, box = 64 pi (256 points, spacing pi/4)\n",
                pfc_amplitude(PFC_BACKGROUND, PFC_B0)
            ));
            s.push_str("  patch  cx    cy    half_w  half_h  theta(deg)\n");
            for (i, p) in PFC_PATCHES.iter().enumerate() {
                s.push_str(&format!(
                    "  {}      {:.2}  {:.2}  {:.2}    {:.2}    {:.1}\n",
                    i + 1,
                    p.cx,
                    p.cy,
                    p.half_w,
                    p.half_h,
                    p.angle.to_degrees()
                ));
            }
        }
        Preset::Smooth => {
            s.push_str("smooth\nphi0(x, y) = 0.1 sin(2 pi x / lx) sin(2 pi y / ly)\n");
        }
        Preset::Custom => {
            s.push_str("custom\nphi0 read from init_file (.pfield), else 0.1 sin(2 pi x / lx) sin(2 pi y / ly)\n");
        }
    }
    s.push_str("\ndefault configuration:\n");
    s.push_str(&c.to_string());
    s
}
