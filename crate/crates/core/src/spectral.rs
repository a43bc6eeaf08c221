//! Periodic uniform grids and Fourier pseudo-spectral calculus.
//!
//! Fields are stored as `Array2<f64>` of shape `(nx, ny)` in standard
//! (row-major) layout, so `values[[i, j]]` lives at `x = i·lx/nx`,
//! `y = j·ly/ny`. Derivatives are applied as wavenumber symbols on the
//! full complex DFT. The discrete inner product is the rectangle rule
//! `(f, g) = cell_weight · Σ f_ij g_ij`, which is exact for trigonometric
//! interpolants and makes Parseval's identity hold to roundoff.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Wavenumbers attached to one Fourier mode.
///
/// `kx`, `ky` are the full wavenumbers used by even-order operators.
/// `kx_d1`, `ky_d1` are the first-derivative wavenumbers, which vanish on
/// the Nyquist row/column so that gradient and divergence stay exactly
/// skew-adjoint on real data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wavevector {
    pub kx: f64,
    pub ky: f64,
    pub kx_d1: f64,
    pub ky_d1: f64,
}

impl Wavevector {
    /// `|k|²`, the symbol of `−Δ`.
    pub fn norm2(&self) -> f64 {
        self.kx * self.kx + self.ky * self.ky
    }

    /// `|k̃|²`, the symbol of `−∇·∇` built from first-derivative wavenumbers.
    pub fn norm2_d1(&self) -> f64 {
        self.kx_d1 * self.kx_d1 + self.ky_d1 * self.ky_d1
    }
}

thread_local! {
    // FFT scratch and transpose buffer, reused across calls.
    static FFT_WORK: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// A periodic uniform 2D grid with precomputed wavenumbers and FFT plans.
///
/// Immutable after construction; share it behind an `Arc`.
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    cell_weight: f64,
    kx: Vec<f64>,
    ky: Vec<f64>,
    kx_d1: Vec<f64>,
    ky_d1: Vec<f64>,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("lx", &self.lx)
            .field("ly", &self.ly)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }
}

fn wavenumbers(n: usize, l: f64) -> (Vec<f64>, Vec<f64>) {
    let base = 2.0 * PI / l;
    let full: Vec<f64> = (0..n)
        .map(|i| {
            let m = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
            base * m
        })
        .collect();
    let mut d1 = full.clone();
    d1[n / 2] = 0.0;
    (full, d1)
}

/// Builds a grid. Sizes must be even and at least 4; lengths positive.
pub fn make_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Arc<Grid>> {
    Grid::new(nx, ny, lx, ly).map(Arc::new)
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        for (axis, n) in [("nx", nx), ("ny", ny)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGridSize { axis, n });
            }
        }
        for (axis, l) in [("lx", lx), ("ly", ly)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidGridLength { axis, l });
            }
        }
        let (kx, kx_d1) = wavenumbers(nx, lx);
        let (ky, ky_d1) = wavenumbers(ny, ly);
        let mut planner = FftPlanner::new();
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            cell_weight: lx * ly / (nx * ny) as f64,
            kx,
            ky,
            kx_d1,
            ky_d1,
            fft_x: planner.plan_fft_forward(nx),
            ifft_x: planner.plan_fft_inverse(nx),
            fft_y: planner.plan_fft_forward(ny),
            ifft_y: planner.plan_fft_inverse(ny),
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `lx·ly/(nx·ny)`.
    pub fn cell_weight(&self) -> f64 {
        self.cell_weight
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.lx / self.nx as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.ly / self.ny as f64
    }

    pub fn wavevector(&self, i: usize, j: usize) -> Wavevector {
        Wavevector {
            kx: self.kx[i],
            ky: self.ky[j],
            kx_d1: self.kx_d1[i],
            ky_d1: self.ky_d1[j],
        }
    }

    /// Tabulates a symbol over every mode of the grid.
    pub fn symbol<F: Fn(Wavevector) -> f64>(&self, f: F) -> Array2<f64> {
        Array2::from_shape_fn((self.nx, self.ny), |(i, j)| f(self.wavevector(i, j)))
    }

    pub fn check_shape(&self, a: &Array2<f64>) -> Result<()> {
        if a.dim() != (self.nx, self.ny) {
            return Err(Error::ShapeMismatch {
                expected: (self.nx, self.ny),
                found: a.dim(),
            });
        }
        Ok(())
    }

    fn fft2(&self, data: &mut Array2<Complex64>, inverse: bool) {
        let (row, col) = if inverse {
            (&self.ifft_y, &self.ifft_x)
        } else {
            (&self.fft_y, &self.fft_x)
        };
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().to_owned();
        }
        let buf = data.as_slice_mut().expect("standard layout");
        let need = row.get_inplace_scratch_len().max(col.get_inplace_scratch_len());
        FFT_WORK.with(|w| {
            let (scratch, t) = &mut *w.borrow_mut();
            let zero = Complex64::new(0.0, 0.0);
            if scratch.len() < need {
                scratch.resize(need, zero);
            }
            if t.len() < buf.len() {
                t.resize(buf.len(), zero);
            }
            let t = &mut t[..buf.len()];
            row.process_with_scratch(buf, &mut scratch[..need]);
            transpose::transpose(buf, t, self.ny, self.nx);
            col.process_with_scratch(t, &mut scratch[..need]);
            transpose::transpose(t, buf, self.nx, self.ny);
        });
    }

    /// Unnormalized forward DFT of a real field.
    pub fn forward(&self, f: &Array2<f64>) -> Array2<Complex64> {
        let mut c = f.mapv(|v| Complex64::new(v, 0.0));
        self.fft2(&mut c, false);
        c
    }

    /// Inverse DFT (normalized by `1/(nx·ny)`), keeping the real part.
    pub fn inverse(&self, spec: &Array2<Complex64>) -> Array2<f64> {
        let mut c = spec.clone();
        self.fft2(&mut c, true);
        let scale = 1.0 / self.len() as f64;
        c.mapv(|z| z.re * scale)
    }

    /// Forward transforms of two real fields with one complex FFT.
    pub fn forward_pair(&self, a: &Array2<f64>, b: &Array2<f64>) -> (Array2<Complex64>, Array2<Complex64>) {
        let (nx, ny) = (self.nx, self.ny);
        let mut z = Zip::from(a).and(b).map_collect(|&x, &y| Complex64::new(x, y));
        self.fft2(&mut z, false);
        let zs = z.as_slice().expect("standard layout");
        let mut ah = Vec::with_capacity(nx * ny);
        let mut bh = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            let im = if i == 0 { 0 } else { nx - i };
            let (row, mrow) = (&zs[i * ny..(i + 1) * ny], &zs[im * ny..(im + 1) * ny]);
            for (j, &zk) in row.iter().enumerate() {
                let jm = if j == 0 { 0 } else { ny - j };
                let zm = mrow[jm].conj();
                ah.push((zk + zm) * 0.5);
                let d = (zk - zm) * 0.5;
                // (zk − zm)/(2i)
                bh.push(Complex64::new(d.im, -d.re));
            }
        }
        (
            Array2::from_shape_vec((nx, ny), ah).expect("grid shape"),
            Array2::from_shape_vec((nx, ny), bh).expect("grid shape"),
        )
    }

    /// Inverse transforms of two Hermitian spectra with one complex FFT.
    pub fn inverse_pair(&self, ah: &Array2<Complex64>, bh: &Array2<Complex64>) -> (Array2<f64>, Array2<f64>) {
        let mut z = Zip::from(ah)
            .and(bh)
            .map_collect(|&a, &b| Complex64::new(a.re - b.im, a.im + b.re));
        self.fft2(&mut z, true);
        let scale = 1.0 / self.len() as f64;
        (z.mapv(|c| c.re * scale), z.mapv(|c| c.im * scale))
    }

    /// Applies a real symbol: `F⁻¹[s(k) F[f]]`.
    pub fn apply_symbol(&self, f: &Array2<f64>, symbol: &Array2<f64>) -> Array2<f64> {
        let mut fh = self.forward(f);
        Zip::from(&mut fh).and(symbol).for_each(|z, &s| *z *= s);
        self.inverse(&fh)
    }

    /// Zeroes modes outside the 2/3-rule band.
    pub fn dealias(&self, spec: &mut Array2<Complex64>) {
        let (nx, ny) = (self.nx, self.ny);
        let keep = |i: usize, n: usize| {
            let m = if i <= n / 2 { i } else { n - i };
            3 * m <= n
        };
        for ((i, j), z) in spec.indexed_iter_mut() {
            if !(keep(i, nx) && keep(j, ny)) {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// 2/3-rule projection of a real field.
    pub fn dealias_field(&self, f: &Array2<f64>) -> Array2<f64> {
        let mut fh = self.forward(f);
        self.dealias(&mut fh);
        self.inverse(&fh)
    }

    /// Discrete `L²` inner product of two grid arrays.
    pub fn inner(&self, f: &Array2<f64>, g: &Array2<f64>) -> f64 {
        self.cell_weight * Zip::from(f).and(g).fold(0.0, |acc, &a, &b| acc + a * b)
    }

    /// Inner product evaluated from unnormalized spectra (Parseval).
    pub fn inner_spectral(&self, fh: &Array2<Complex64>, gh: &Array2<Complex64>) -> f64 {
        let s = Zip::from(fh).and(gh).fold(0.0, |acc, a, b| acc + (a * b.conj()).re);
        self.cell_weight * s / self.len() as f64
    }

    /// `(f, s·f)` for a real non-negative symbol `s`, from the spectrum of `f`.
    pub fn quadratic_form(&self, fh: &Array2<Complex64>, symbol: &Array2<f64>) -> f64 {
        let s = Zip::from(fh).and(symbol).fold(0.0, |acc, z, &w| acc + w * z.norm_sqr());
        self.cell_weight * s / self.len() as f64
    }

    pub fn integral(&self, f: &Array2<f64>) -> f64 {
        self.cell_weight * f.sum()
    }

    pub fn laplacian_array(&self, f: &Array2<f64>) -> Array2<f64> {
        let mut fh = self.forward(f);
        for ((i, j), z) in fh.indexed_iter_mut() {
            *z *= -self.wavevector(i, j).norm2();
        }
        self.inverse(&fh)
    }

    pub fn biharmonic_array(&self, f: &Array2<f64>) -> Array2<f64> {
        let mut fh = self.forward(f);
        for ((i, j), z) in fh.indexed_iter_mut() {
            let k2 = self.wavevector(i, j).norm2();
            *z *= k2 * k2;
        }
        self.inverse(&fh)
    }

    /// Spectral gradient from an already transformed field.
    pub fn gradient_from_spectrum(&self, fh: &Array2<Complex64>) -> (Array2<f64>, Array2<f64>) {
        let mut dx = fh.clone();
        let mut dy = fh.clone();
        for i in 0..self.nx {
            for j in 0..self.ny {
                let k = self.wavevector(i, j);
                dx[[i, j]] *= Complex64::new(0.0, k.kx_d1);
                dy[[i, j]] *= Complex64::new(0.0, k.ky_d1);
            }
        }
        self.inverse_pair(&dx, &dy)
    }

    pub fn gradient_array(&self, f: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        self.gradient_from_spectrum(&self.forward(f))
    }

    /// Spectrum of `∇·(vx, vy)`.
    pub fn divergence_spectrum(&self, vx: &Array2<f64>, vy: &Array2<f64>) -> Array2<Complex64> {
        let (mut xh, yh) = self.forward_pair(vx, vy);
        for ((i, j), z) in xh.indexed_iter_mut() {
            let k = self.wavevector(i, j);
            *z = Complex64::new(0.0, k.kx_d1) * *z + Complex64::new(0.0, k.ky_d1) * yh[[i, j]];
        }
        xh
    }

    pub fn divergence_array(&self, vx: &Array2<f64>, vy: &Array2<f64>) -> Array2<f64> {
        self.inverse(&self.divergence_spectrum(vx, vy))
    }
}

/// A real scalar field on a grid.
#[derive(Debug, Clone)]
pub struct RealField {
    grid: Arc<Grid>,
    values: Array2<f64>,
}

/// A 2-component vector field; both components share one grid.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub x_comp: RealField,
    pub y_comp: RealField,
}

impl RealField {
    /// Wraps an array, rejecting wrong shapes and non-finite entries.
    pub fn new(grid: Arc<Grid>, values: Array2<f64>) -> Result<Self> {
        grid.check_shape(&values)?;
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("field entry ({i}, {j}) = {v}"),
            });
        }
        Ok(Self { grid, values })
    }

    /// Wraps an array produced by internal arithmetic on finite inputs.
    pub(crate) fn from_parts(grid: Arc<Grid>, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), grid.shape());
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = Array2::zeros(grid.shape());
        Self { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = Array2::from_elem(grid.shape(), c);
        Self { grid, values }
    }

    /// Samples `f(x, y)` at the grid nodes.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Arc<Grid>, f: F) -> Self {
        let values = Array2::from_shape_fn(grid.shape(), |(i, j)| f(grid.x(i), grid.y(j)));
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_grid(&self, other: &RealField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.grid.clone(), self.values.mapv(f))
    }

    pub fn laplacian(&self) -> Self {
        Self::from_parts(self.grid.clone(), self.grid.laplacian_array(&self.values))
    }

    pub fn biharmonic(&self) -> Self {
        Self::from_parts(self.grid.clone(), self.grid.biharmonic_array(&self.values))
    }

    pub fn gradient(&self) -> VectorField {
        let (gx, gy) = self.grid.gradient_array(&self.values);
        VectorField {
            x_comp: Self::from_parts(self.grid.clone(), gx),
            y_comp: Self::from_parts(self.grid.clone(), gy),
        }
    }

    /// `(f, g)` with the grid's quadrature weight.
    pub fn inner(&self, other: &RealField) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self.grid.inner(&self.values, &other.values))
    }

    pub fn norm2(&self) -> f64 {
        self.grid.inner(&self.values, &self.values).sqrt()
    }

    pub fn integral(&self) -> f64 {
        self.grid.integral(&self.values)
    }

    pub fn mean(&self) -> f64 {
        self.values.mean().unwrap_or(0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl VectorField {
    pub fn new(x_comp: RealField, y_comp: RealField) -> Result<Self> {
        x_comp.same_grid(&y_comp)?;
        Ok(Self { x_comp, y_comp })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.x_comp.grid()
    }

    pub fn divergence(&self) -> RealField {
        let grid = self.grid().clone();
        let div = grid.divergence_array(self.x_comp.values(), self.y_comp.values());
        RealField::from_parts(grid, div)
    }

    /// Componentwise inner product `(u, v) = (u_x, v_x) + (u_y, v_y)`.
    pub fn inner(&self, other: &VectorField) -> Result<f64> {
        Ok(self.x_comp.inner(&other.x_comp)? + self.y_comp.inner(&other.y_comp)?)
    }

    pub fn norm2(&self) -> f64 {
        (self.x_comp.norm2().powi(2) + self.y_comp.norm2().powi(2)).sqrt()
    }
}

/// `(f, g)`; errors when the grids differ.
pub fn inner(f: &RealField, g: &RealField) -> Result<f64> {
    f.inner(g)
}

pub fn norm2(f: &RealField) -> f64 {
    f.norm2()
}
