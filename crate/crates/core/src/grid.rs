//! Fields on a uniform periodic square and their Fourier calculus.
//!
//! Values are stored row-major with the x index fastest: the sample at
//! `(ix, iy)` lives at `iy * nx + ix` and sits at `(ix * L / nx, iy * L / ny)`.
//! Spectral coefficients use the same layout in standard FFT ordering and are
//! normalized so that a constant field `c` has zero-mode coefficient `c`.
//!
//! Differentiation zeroes the Nyquist row and column, so every derivative of a
//! real field is real and every derivative operator is skew-symmetric.
//! Products of fields are dealiased by truncating modes with
//! `|j| > (n - 1) / 3` along either axis.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ChnsError, Result};

/// Uniform periodic grid on the square `[0, L)^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "L")]
    pub length: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, length: f64) -> Result<Self> {
        let grid = GridSpec { nx, ny, length };
        grid.validate()?;
        Ok(grid)
    }

    /// Square grid with `n` points per side.
    pub fn square(n: usize, length: f64) -> Result<Self> {
        Self::new(n, n, length)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("nx", self.nx), ("ny", self.ny)] {
            if n < 8 || n % 2 != 0 {
                return Err(ChnsError::InvalidGrid(format!(
                    "{name} = {n} must be even and >= 8"
                )));
            }
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(ChnsError::InvalidGrid(format!(
                "L = {} must be positive",
                self.length
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// |Ω| = L².
    pub fn area(&self) -> f64 {
        self.length * self.length
    }

    /// Quadrature weight of one grid point.
    pub fn cell_area(&self) -> f64 {
        self.area() / self.len() as f64
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.length / self.ny as f64
    }

    pub fn point(&self, ix: usize, iy: usize) -> (f64, f64) {
        (ix as f64 * self.dx(), iy as f64 * self.dy())
    }

    /// 2π / L, the lowest nonzero wavenumber.
    pub fn base_wavenumber(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn wavenumbers(&self) -> Wavenumbers {
        Wavenumbers::new(self)
    }
}

/// Signed mode index of FFT slot `i` on an axis of length `n`. The Nyquist
/// slot maps to `n / 2`.
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Per-axis wavenumber tables used by the spectral operators.
#[derive(Clone, Debug)]
pub struct Wavenumbers {
    /// Derivative wavenumbers along x (Nyquist zeroed).
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    /// Modes kept by the 2/3 rule.
    pub keep_x: Vec<bool>,
    pub keep_y: Vec<bool>,
}

impl Wavenumbers {
    fn new(grid: &GridSpec) -> Self {
        let axis = |n: usize| {
            let k0 = grid.base_wavenumber();
            let cut = ((n - 1) / 3) as i64;
            let k = (0..n)
                .map(|i| if i == n / 2 { 0.0 } else { k0 * signed_index(i, n) as f64 })
                .collect::<Vec<_>>();
            let keep = (0..n)
                .map(|i| i != n / 2 && signed_index(i, n).abs() <= cut)
                .collect::<Vec<_>>();
            (k, keep)
        };
        let (kx, keep_x) = axis(grid.nx);
        let (ky, keep_y) = axis(grid.ny);
        Wavenumbers { kx, ky, keep_x, keep_y }
    }

    #[inline]
    pub fn k2(&self, ix: usize, iy: usize) -> f64 {
        self.kx[ix] * self.kx[ix] + self.ky[iy] * self.ky[iy]
    }

    #[inline]
    pub fn keep(&self, ix: usize, iy: usize) -> bool {
        self.keep_x[ix] && self.keep_y[iy]
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Reusable 2-D transform workspace for one grid.
pub(crate) struct Fft2 {
    grid: GridSpec,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transpose: Vec<Complex64>,
    buf: Vec<Complex64>,
}

impl Fft2 {
    pub(crate) fn new(grid: GridSpec) -> Self {
        let fwd_x = plan(grid.nx, false);
        let inv_x = plan(grid.nx, true);
        let fwd_y = plan(grid.ny, false);
        let inv_y = plan(grid.ny, true);
        let scratch_len = [&fwd_x, &inv_x, &fwd_y, &inv_y]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Fft2 {
            grid,
            fwd_x,
            inv_x,
            fwd_y,
            inv_y,
            scratch: vec![Complex64::default(); scratch_len],
            transpose: vec![Complex64::default(); grid.len()],
            buf: vec![Complex64::default(); grid.len()],
        }
    }

    fn transform(&mut self, data: &mut [Complex64], inverse: bool) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (fx, fy) = if inverse {
            (&self.inv_x, &self.inv_y)
        } else {
            (&self.fwd_x, &self.fwd_y)
        };
        fx.process_with_scratch(data, &mut self.scratch);
        for iy in 0..ny {
            for ix in 0..nx {
                self.transpose[ix * ny + iy] = data[iy * nx + ix];
            }
        }
        fy.process_with_scratch(&mut self.transpose, &mut self.scratch);
        for ix in 0..nx {
            for iy in 0..ny {
                data[iy * nx + ix] = self.transpose[ix * ny + iy];
            }
        }
        if !inverse {
            let norm = 1.0 / self.grid.len() as f64;
            for c in data.iter_mut() {
                *c *= norm;
            }
        }
    }

    pub(crate) fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    pub(crate) fn inverse(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    pub(crate) fn forward_real(&mut self, input: &[f64], out: &mut [Complex64]) {
        for (o, &v) in out.iter_mut().zip(input) {
            *o = Complex64::new(v, 0.0);
        }
        self.forward(out);
    }

    /// Transforms two real fields with one complex FFT.
    pub(crate) fn forward_real_pair(
        &mut self,
        a: &[f64],
        b: &[f64],
        out_a: &mut [Complex64],
        out_b: &mut [Complex64],
    ) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut z = std::mem::take(&mut self.buf);
        for ((z, &x), &y) in z.iter_mut().zip(a).zip(b) {
            *z = Complex64::new(x, y);
        }
        self.forward(&mut z);
        for iy in 0..ny {
            let my = (ny - iy) % ny;
            for ix in 0..nx {
                let mx = (nx - ix) % nx;
                let zk = z[iy * nx + ix];
                let zm = z[my * nx + mx].conj();
                out_a[iy * nx + ix] = (zk + zm) * 0.5;
                out_b[iy * nx + ix] = Complex64::new(0.0, -0.5) * (zk - zm);
            }
        }
        self.buf = z;
    }

    /// Inverse transform keeping the real part.
    pub(crate) fn inverse_real(&mut self, input: &[Complex64], out: &mut [f64]) {
        let mut z = std::mem::take(&mut self.buf);
        z.copy_from_slice(input);
        self.inverse(&mut z);
        for (o, c) in out.iter_mut().zip(&z) {
            *o = c.re;
        }
        self.buf = z;
    }

    /// Inverse of two Hermitian spectra with one complex FFT.
    pub(crate) fn inverse_real_pair(
        &mut self,
        a: &[Complex64],
        b: &[Complex64],
        out_a: &mut [f64],
        out_b: &mut [f64],
    ) {
        let mut z = std::mem::take(&mut self.buf);
        for ((z, &x), &y) in z.iter_mut().zip(a).zip(b) {
            *z = x + Complex64::new(0.0, 1.0) * y;
        }
        self.inverse(&mut z);
        for ((c, oa), ob) in z.iter().zip(out_a.iter_mut()).zip(out_b.iter_mut()) {
            *oa = c.re;
            *ob = c.im;
        }
        self.buf = z;
    }
}

fn check_values(grid: &GridSpec, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(ChnsError::mismatch(
            (grid.nx, grid.ny, grid.len()),
            values.len(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ChnsError::NonFinite);
    }
    Ok(())
}

fn check_same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(ChnsError::mismatch(a, b));
    }
    Ok(())
}

/// Real scalar field sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_values(&grid, &values)?;
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_values_unchecked(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let (x, y) = grid.point(ix, iy);
                values.push(f(x, y));
            }
        }
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    pub fn product(&self, other: &ScalarField) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(x, y)| x * y).collect(),
        })
    }

    /// ∫_Ω f by the trapezoidal rule.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// ⟨f⟩ = |Ω|⁻¹ ∫_Ω f.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn inner(&self, other: &ScalarField) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(dot(&self.values, &other.values) * self.grid.cell_area())
    }

    pub fn l2_norm(&self) -> f64 {
        (dot(&self.values, &self.values) * self.grid.cell_area()).sqrt()
    }

    /// ‖∇f‖.
    pub fn h1_seminorm(&self) -> f64 {
        self.to_spectral().weighted_norm(|k2| k2)
    }

    /// (‖f‖² + ‖∇f‖²)^½.
    pub fn h1_norm(&self) -> f64 {
        self.to_spectral().weighted_norm(|k2| 1.0 + k2)
    }

    /// ‖Δf‖.
    pub fn h2_seminorm(&self) -> f64 {
        self.to_spectral().weighted_norm(|k2| k2 * k2)
    }

    /// (‖f‖² + ‖∇f‖² + ‖Δf‖²)^½.
    pub fn h2_norm(&self) -> f64 {
        self.to_spectral().weighted_norm(|k2| 1.0 + k2 + k2 * k2)
    }

    /// ‖∇Δf‖.
    pub fn h3_seminorm(&self) -> f64 {
        self.to_spectral().weighted_norm(|k2| k2 * k2 * k2)
    }

    pub fn l4_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| (v * v) * (v * v)).sum();
        (s * self.grid.cell_area()).powf(0.25)
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_spectral(&self) -> SpectralCoeffs {
        to_spectral(self)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fourier coefficients of a real field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCoeffs {
    grid: GridSpec,
    data: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn from_data(grid: GridSpec, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(ChnsError::mismatch(grid.len(), data.len()));
        }
        Ok(SpectralCoeffs { grid, data })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Coefficient at FFT slots `(ix, iy)`.
    pub fn get(&self, ix: usize, iy: usize) -> Complex64 {
        self.data[iy * self.grid.nx + ix]
    }

    /// (|Ω| Σ |c_k|²)^½, equal to the physical L² norm.
    pub fn norm(&self) -> f64 {
        self.weighted_norm(|_| 1.0)
    }

    /// (|Ω| Σ w(|k|²) |c_k|²)^½ with Nyquist-zeroed wavenumbers.
    pub fn weighted_norm(&self, w: impl Fn(f64) -> f64) -> f64 {
        let k = self.grid.wavenumbers();
        let nx = self.grid.nx;
        let mut s = 0.0;
        for (i, c) in self.data.iter().enumerate() {
            s += w(k.k2(i % nx, i / nx)) * c.norm_sqr();
        }
        (s * self.grid.area()).sqrt()
    }

    pub fn to_physical(&self) -> ScalarField {
        to_physical(self)
    }
}

pub fn to_spectral(f: &ScalarField) -> SpectralCoeffs {
    let mut data = vec![Complex64::default(); f.grid.len()];
    Fft2::new(f.grid).forward_real(&f.values, &mut data);
    SpectralCoeffs { grid: f.grid, data }
}

pub fn to_physical(c: &SpectralCoeffs) -> ScalarField {
    let mut values = vec![0.0; c.grid.len()];
    Fft2::new(c.grid).inverse_real(&c.data, &mut values);
    ScalarField {
        grid: c.grid,
        values,
    }
}

/// Applies `m(ix, iy)` to every coefficient of `f` and returns to physical space.
pub(crate) fn spectral_map(
    f: &ScalarField,
    m: impl Fn(&Wavenumbers, usize, usize, Complex64) -> Complex64,
) -> ScalarField {
    let mut c = to_spectral(f);
    let k = f.grid.wavenumbers();
    let nx = f.grid.nx;
    for (i, v) in c.data.iter_mut().enumerate() {
        *v = m(&k, i % nx, i / nx, *v);
    }
    to_physical(&c)
}

/// Real velocity field (two components) on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    grid: GridSpec,
    ux: Vec<f64>,
    uy: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0, 0.0)
    }

    pub fn constant(grid: GridSpec, cx: f64, cy: f64) -> Self {
        VelocityField {
            grid,
            ux: vec![cx; grid.len()],
            uy: vec![cy; grid.len()],
        }
    }

    pub fn from_components(grid: GridSpec, ux: Vec<f64>, uy: Vec<f64>) -> Result<Self> {
        check_values(&grid, &ux)?;
        check_values(&grid, &uy)?;
        Ok(VelocityField { grid, ux, uy })
    }

    pub(crate) fn from_components_unchecked(grid: GridSpec, ux: Vec<f64>, uy: Vec<f64>) -> Self {
        VelocityField { grid, ux, uy }
    }

    pub fn from_scalars(ux: ScalarField, uy: ScalarField) -> Result<Self> {
        check_same_grid(&ux.grid, &uy.grid)?;
        Ok(VelocityField {
            grid: ux.grid,
            ux: ux.values,
            uy: uy.values,
        })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut ux = Vec::with_capacity(grid.len());
        let mut uy = Vec::with_capacity(grid.len());
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let (x, y) = grid.point(ix, iy);
                let (a, b) = f(x, y);
                ux.push(a);
                uy.push(b);
            }
        }
        VelocityField { grid, ux, uy }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn ux(&self) -> &[f64] {
        &self.ux
    }

    pub fn uy(&self) -> &[f64] {
        &self.uy
    }

    pub fn x(&self) -> ScalarField {
        ScalarField::from_values_unchecked(self.grid, self.ux.clone())
    }

    pub fn y(&self) -> ScalarField {
        ScalarField::from_values_unchecked(self.grid, self.uy.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.ux.iter().chain(&self.uy).all(|v| v.is_finite())
    }

    pub fn scale(&self, c: f64) -> Self {
        VelocityField {
            grid: self.grid,
            ux: self.ux.iter().map(|v| c * v).collect(),
            uy: self.uy.iter().map(|v| c * v).collect(),
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &VelocityField, b: f64) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        let lin = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| a * x + b * y).collect();
        Ok(VelocityField {
            grid: self.grid,
            ux: lin(&self.ux, &other.ux),
            uy: lin(&self.uy, &other.uy),
        })
    }

    pub fn add(&self, other: &VelocityField) -> Result<Self> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &VelocityField) -> Result<Self> {
        self.combine(1.0, other, -1.0)
    }

    pub fn inner(&self, other: &VelocityField) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok((dot(&self.ux, &other.ux) + dot(&self.uy, &other.uy)) * self.grid.cell_area())
    }

    pub fn l2_norm(&self) -> f64 {
        ((dot(&self.ux, &self.ux) + dot(&self.uy, &self.uy)) * self.grid.cell_area()).sqrt()
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = self.grid.len() as f64;
        (self.ux.iter().sum::<f64>() / n, self.uy.iter().sum::<f64>() / n)
    }

    /// ‖∇u‖ summed over both components.
    pub fn h1_seminorm(&self) -> f64 {
        self.x().h1_seminorm().hypot(self.y().h1_seminorm())
    }

    /// Dual norm ‖A^{-1/2} u‖ of a solenoidal field. The mean (zero-mode)
    /// component, on which A is singular, is excluded.
    pub fn dual_norm(&self) -> Result<f64> {
        ensure_solenoidal(self)?;
        let w = |k2: f64| if k2 > 0.0 { 1.0 / k2 } else { 0.0 };
        Ok(self
            .x()
            .to_spectral()
            .weighted_norm(w)
            .hypot(self.y().to_spectral().weighted_norm(w)))
    }

    pub fn divergence_norm(&self) -> f64 {
        div(self).l2_norm()
    }
}

/// Rejects fields whose spectral divergence is not at round-off level
/// relative to `‖∇u‖ + (2π/L)‖u‖`.
pub fn ensure_solenoidal(u: &VelocityField) -> Result<()> {
    let d = u.divergence_norm();
    let scale = u.h1_seminorm() + u.grid.base_wavenumber() * u.l2_norm();
    if d <= 1e-8 * scale + f64::MIN_POSITIVE {
        Ok(())
    } else {
        Err(ChnsError::NotSolenoidal(d))
    }
}

pub fn grad(f: &ScalarField) -> VelocityField {
    let c = to_spectral(f);
    let k = f.grid.wavenumbers();
    let nx = f.grid.nx;
    let mut cx = c.data.clone();
    let mut cy = c.data;
    for i in 0..cx.len() {
        let (ix, iy) = (i % nx, i / nx);
        cx[i] *= Complex64::new(0.0, k.kx[ix]);
        cy[i] *= Complex64::new(0.0, k.ky[iy]);
    }
    let mut ux = vec![0.0; f.grid.len()];
    let mut uy = vec![0.0; f.grid.len()];
    Fft2::new(f.grid).inverse_real_pair(&cx, &cy, &mut ux, &mut uy);
    VelocityField {
        grid: f.grid,
        ux,
        uy,
    }
}

pub fn div(v: &VelocityField) -> ScalarField {
    let grid = v.grid;
    let mut fft = Fft2::new(grid);
    let mut cx = vec![Complex64::default(); grid.len()];
    let mut cy = vec![Complex64::default(); grid.len()];
    fft.forward_real_pair(&v.ux, &v.uy, &mut cx, &mut cy);
    let k = grid.wavenumbers();
    for i in 0..cx.len() {
        let (ix, iy) = (i % grid.nx, i / grid.nx);
        cx[i] = Complex64::new(0.0, k.kx[ix]) * cx[i] + Complex64::new(0.0, k.ky[iy]) * cy[i];
    }
    let mut out = vec![0.0; grid.len()];
    fft.inverse_real(&cx, &mut out);
    ScalarField { grid, values: out }
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    spectral_map(f, |k, ix, iy, c| -k.k2(ix, iy) * c)
}

/// Truncates every mode outside the 2/3 band.
pub fn dealias(f: &ScalarField) -> ScalarField {
    spectral_map(f, |k, ix, iy, c| if k.keep(ix, iy) { c } else { Complex64::default() })
}

/// In-place Leray projection of a spectral velocity pair.
pub(crate) fn project_spectral(k: &Wavenumbers, nx: usize, cx: &mut [Complex64], cy: &mut [Complex64]) {
    for i in 0..cx.len() {
        let (ix, iy) = (i % nx, i / nx);
        let k2 = k.k2(ix, iy);
        if k2 > 0.0 {
            let (kx, ky) = (k.kx[ix], k.ky[iy]);
            let kdot = (kx * cx[i] + ky * cy[i]) / k2;
            cx[i] -= kx * kdot;
            cy[i] -= ky * kdot;
        }
    }
}

/// Helmholtz-Leray projection onto divergence-free fields.
pub fn leray_project(v: &VelocityField) -> VelocityField {
    let grid = v.grid;
    let mut fft = Fft2::new(grid);
    let mut cx = vec![Complex64::default(); grid.len()];
    let mut cy = vec![Complex64::default(); grid.len()];
    fft.forward_real_pair(&v.ux, &v.uy, &mut cx, &mut cy);
    project_spectral(&grid.wavenumbers(), grid.nx, &mut cx, &mut cy);
    let mut ux = vec![0.0; grid.len()];
    let mut uy = vec![0.0; grid.len()];
    fft.inverse_real_pair(&cx, &cy, &mut ux, &mut uy);
    VelocityField { grid, ux, uy }
}

/// Fractional power `B_N^s` of the zero-mean periodic Laplacian: multiplies
/// each coefficient by `|k|^{2s}`. The zero mode (and any mode whose
/// derivative symbol vanishes) is set to zero. With `strict`, inputs whose
/// mean is not at round-off level are rejected.
pub fn bn_power(f: &ScalarField, s: f64, strict: bool) -> Result<ScalarField> {
    if strict {
        let m = f.mean();
        let scale = f.l2_norm() / f.grid.area().sqrt();
        if m.abs() > 1e-12 * scale.max(1.0) {
            return Err(ChnsError::NonzeroMean(m));
        }
    }
    Ok(spectral_map(f, |k, ix, iy, c| {
        let k2 = k.k2(ix, iy);
        if k2 > 0.0 {
            k2.powf(s) * c
        } else {
            Complex64::default()
        }
    }))
}

/// Zero-mean random field with Gaussian Fourier coefficients on `0 < |j| <= cutoff`
/// (mode-index units).
pub fn random_band_limited<R: Rng + ?Sized>(grid: GridSpec, cutoff: f64, rng: &mut R) -> ScalarField {
    let noise: Vec<f64> = (0..grid.len()).map(|_| rng.sample(StandardNormal)).collect();
    let f = ScalarField::from_values_unchecked(grid, noise);
    let (nx, ny) = (grid.nx, grid.ny);
    spectral_map(&f, |_, ix, iy, c| {
        let (jx, jy) = (signed_index(ix, nx), signed_index(iy, ny));
        let j2 = (jx * jx + jy * jy) as f64;
        let nyq = ix == nx / 2 || iy == ny / 2;
        if j2 > 0.0 && j2 <= cutoff * cutoff && !nyq {
            c
        } else {
            Complex64::default()
        }
    })
}

/// Divergence-free random field `(∂y ψ, −∂x ψ)` from a random stream function.
pub fn random_solenoidal<R: Rng + ?Sized>(grid: GridSpec, cutoff: f64, rng: &mut R) -> VelocityField {
    let psi = random_band_limited(grid, cutoff, rng);
    let g = grad(&psi);
    VelocityField {
        grid,
        ux: g.uy,
        uy: g.ux.into_iter().map(|v| -v).collect(),
    }
}

/// Evaluates the trigonometric interpolant of `f` on `target` (same `L`).
/// Modes that do not fit below the target's Nyquist frequency are dropped.
pub fn resample(f: &ScalarField, target: GridSpec) -> Result<ScalarField> {
    if (f.grid.length - target.length).abs() > 1e-12 * f.grid.length {
        return Err(ChnsError::mismatch(f.grid, target));
    }
    let src = to_spectral(f);
    let (sx, sy) = (f.grid.nx, f.grid.ny);
    let (tx, ty) = (target.nx, target.ny);
    let mut data = vec![Complex64::default(); target.len()];
    for iy in 0..sy {
        let jy = signed_index(iy, sy);
        if iy == sy / 2 || jy.unsigned_abs() as usize >= ty / 2 {
            continue;
        }
        let oy = jy.rem_euclid(ty as i64) as usize;
        for ix in 0..sx {
            let jx = signed_index(ix, sx);
            if ix == sx / 2 || jx.unsigned_abs() as usize >= tx / 2 {
                continue;
            }
            let ox = jx.rem_euclid(tx as i64) as usize;
            data[oy * tx + ox] = src.data[iy * sx + ix];
        }
    }
    Ok(to_physical(&SpectralCoeffs { grid: target, data }))
}

/// Random field with a prescribed L² norm.
pub fn random_with_norm<R: Rng + ?Sized>(grid: GridSpec, cutoff: f64, norm: f64, rng: &mut R) -> ScalarField {
    let f = random_band_limited(grid, cutoff, rng);
    let n = f.l2_norm();
    if n > 0.0 {
        f.scale(norm / n)
    } else {
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridSpec {
        GridSpec::square(32, 1.0).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(7, 8, 1.0).is_err());
        assert!(GridSpec::new(8, 6, 1.0).is_err());
        assert!(GridSpec::new(8, 8, 0.0).is_err());
        assert!(GridSpec::new(8, 8, f64::NAN).is_err());
        assert!(GridSpec::new(8, 10, 2.0).is_ok());
    }

    #[test]
    fn from_values_rejects_bad_input() {
        let g = grid();
        assert!(matches!(
            ScalarField::from_values(g, vec![0.0; 3]),
            Err(ChnsError::DimensionMismatch { .. })
        ));
        let mut v = vec![0.0; g.len()];
        v[5] = f64::NAN;
        assert!(matches!(ScalarField::from_values(g, v), Err(ChnsError::NonFinite)));
    }

    #[test]
    fn constant_field_has_single_zero_mode() {
        let f = ScalarField::constant(grid(), 2.5);
        let c = f.to_spectral();
        assert!((c.get(0, 0).re - 2.5).abs() < 1e-14);
        for (i, v) in c.data().iter().enumerate().skip(1) {
            assert!(v.norm() < 1e-14, "slot {i}: {v}");
        }
    }

    #[test]
    fn cosine_has_two_conjugate_modes() {
        let g = grid();
        let f = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).cos());
        let c = f.to_spectral();
        let nonzero: Vec<usize> = (0..g.len()).filter(|&i| c.data()[i].norm() > 1e-12).collect();
        assert_eq!(nonzero, vec![1, g.nx - 1]);
        assert!((c.get(1, 0) - c.get(g.nx - 1, 0).conj()).norm() < 1e-14);
        assert!((c.get(1, 0).re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn cosine_derivative_and_norm() {
        let g = grid();
        let f = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).cos());
        let df = grad(&f);
        let expected = ScalarField::from_fn(g, |x, _| -2.0 * PI * (2.0 * PI * x).sin());
        let err = df.x().sub(&expected).unwrap().linf_norm();
        assert!(err < 1e-12, "{err}");
        assert!(df.y().linf_norm() < 1e-12);
        assert!((f.l2_norm().powi(2) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn unit_field_norms() {
        let f = ScalarField::constant(grid(), 1.0);
        assert!((f.mean() - 1.0).abs() < 1e-15);
        assert!((f.l2_norm() - 1.0).abs() < 1e-15);
        assert!(f.h1_seminorm() < 1e-14);
        assert!(grad(&f).l2_norm() < 1e-14);
    }

    #[test]
    fn div_grad_is_laplacian() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_band_limited(g, 8.0, &mut rng);
        let a = div(&grad(&f));
        let b = laplacian(&f);
        assert!(a.sub(&b).unwrap().linf_norm() <= 1e-12 * b.linf_norm());
    }

    #[test]
    fn leray_annihilates_gradients_and_fixes_solenoidal() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = random_band_limited(g, 10.0, &mut rng);
        let v = grad(&psi);
        assert!(leray_project(&v).l2_norm() <= 1e-10 * v.l2_norm());
        let w = random_solenoidal(g, 10.0, &mut rng);
        let pw = leray_project(&w);
        assert!(pw.sub(&w).unwrap().l2_norm() <= 1e-12 * w.l2_norm());
    }

    #[test]
    fn bn_power_eigenfunction_and_mean_check() {
        let g = grid();
        let f = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).cos());
        let f1 = bn_power(&f, 1.0, true).unwrap();
        let err = f1.sub(&f.scale((2.0 * PI).powi(2))).unwrap().linf_norm();
        assert!(err < 1e-10, "{err}");
        let f0 = bn_power(&f, 0.0, true).unwrap();
        assert!(f0.sub(&f).unwrap().linf_norm() < 1e-13);
        let shifted = f.map(|v| v + 1.0);
        assert!(matches!(bn_power(&shifted, 0.5, true), Err(ChnsError::NonzeroMean(_))));
        let lenient = bn_power(&shifted, 0.0, false).unwrap();
        assert!(lenient.sub(&f).unwrap().linf_norm() < 1e-13);
    }

    #[test]
    fn dual_norm_rejects_gradient_fields() {
        let g = grid();
        let f = ScalarField::from_fn(g, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        assert!(matches!(grad(&f).dual_norm(), Err(ChnsError::NotSolenoidal(_))));
        let u = VelocityField::from_fn(g, |_, y| ((2.0 * PI * y).sin(), 0.0));
        let n = u.dual_norm().unwrap();
        assert!((n - u.l2_norm() / (2.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn resample_preserves_band_limited_fields() {
        let coarse = GridSpec::square(16, 2.0).unwrap();
        let fine = GridSpec::square(32, 2.0).unwrap();
        let f = |x: f64, y: f64| (PI * x).sin() * (3.0 * PI * y).cos() + 0.5 * (2.0 * PI * (x + y)).cos();
        let up = resample(&ScalarField::from_fn(coarse, f), fine).unwrap();
        let exact = ScalarField::from_fn(fine, f);
        assert!(up.sub(&exact).unwrap().linf_norm() < 1e-13);
        let down = resample(&exact, coarse).unwrap();
        assert!(down.sub(&ScalarField::from_fn(coarse, f)).unwrap().linf_norm() < 1e-13);
        assert!(resample(&exact, GridSpec::square(16, 1.0).unwrap()).is_err());
    }

    #[test]
    fn pair_transforms_match_single() {
        let g = GridSpec::new(16, 12, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..g.len()).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..g.len()).map(|_| rng.gen::<f64>()).collect();
        let mut fft = Fft2::new(g);
        let mut ca = vec![Complex64::default(); g.len()];
        let mut cb = ca.clone();
        fft.forward_real_pair(&a, &b, &mut ca, &mut cb);
        let mut sa = ca.clone();
        fft.forward_real(&a, &mut sa);
        let mut sb = ca.clone();
        fft.forward_real(&b, &mut sb);
        for i in 0..g.len() {
            assert!((ca[i] - sa[i]).norm() < 1e-14);
            assert!((cb[i] - sb[i]).norm() < 1e-14);
        }
        let mut ra = vec![0.0; g.len()];
        let mut rb = vec![0.0; g.len()];
        fft.inverse_real_pair(&ca, &cb, &mut ra, &mut rb);
        for i in 0..g.len() {
            assert!((ra[i] - a[i]).abs() < 1e-13);
            assert!((rb[i] - b[i]).abs() < 1e-13);
        }
    }
}
