//! Semi-implicit time stepping of the controlled phase-field/Navier-Stokes
//! system
//!
//! ```text
//! φ_t + u·∇φ + m A_N μ = 0,         μ = A_N φ + f(φ)
//! u_t + ν A u + B(u, u) − 𝒦 B2(μ, φ) = U
//! ```
//!
//! The stiff linear parts (`m A_N²`, the stabilization `m S A_N` and `ν A`)
//! are implicit and diagonal in Fourier space; transport, convection,
//! capillary forcing and `f(φ)` are explicit. The pressure never appears:
//! the velocity update is Leray-projected.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::ControlSignal;
use crate::error::{ChnsError, Result};
use crate::grid::{ensure_solenoidal, project_spectral, random_with_norm, Fft2, GridSpec, ScalarField, VelocityField};
use crate::operators::{Params, PotentialSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub dt: f64,
    /// Stabilization constant `S >= 0`.
    pub stabilization: f64,
    pub dealias: bool,
    /// Keep a snapshot every this many steps (0: only the endpoints).
    pub snapshot_every: usize,
    /// Abort when ‖u‖ or ‖φ‖_{H¹} exceeds this.
    pub blowup_cap: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            dt: 1e-3,
            stabilization: 2.0,
            dealias: true,
            snapshot_every: 0,
            blowup_cap: 1e6,
        }
    }
}

impl SchemeConfig {
    pub fn with_dt(dt: f64) -> Self {
        SchemeConfig {
            dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ChnsError::InvalidParameter(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.stabilization.is_finite() && self.stabilization >= 0.0) {
            return Err(ChnsError::InvalidParameter(format!(
                "stabilization = {} must be >= 0",
                self.stabilization
            )));
        }
        if !(self.blowup_cap > 0.0) {
            return Err(ChnsError::InvalidParameter("blowup_cap must be > 0".into()));
        }
        Ok(())
    }
}

/// Snapshot `(t, φ, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub phi: ScalarField,
    pub u: VelocityField,
}

impl State {
    pub fn new(t: f64, phi: ScalarField, u: VelocityField) -> Result<Self> {
        if phi.grid() != u.grid() {
            return Err(ChnsError::mismatch(phi.grid(), u.grid()));
        }
        if !t.is_finite() {
            return Err(ChnsError::InvalidParameter(format!("t = {t}")));
        }
        ensure_solenoidal(&u)?;
        Ok(State { t, phi, u })
    }

    /// `(t, 0, 0)`.
    pub fn rest(grid: GridSpec, t: f64) -> Self {
        State {
            t,
            phi: ScalarField::zeros(grid),
            u: VelocityField::zeros(grid),
        }
    }

    /// Spinodal data at rest: zero-mean Gaussian noise on the modes with
    /// `|j| <= cutoff` (index units), scaled to RMS `amplitude`.
    pub fn spinodal(grid: GridSpec, t: f64, amplitude: f64, cutoff: f64, seed: u64) -> Result<Self> {
        if !(amplitude >= 0.0) || !(cutoff >= 1.0) {
            return Err(ChnsError::InvalidParameter(format!(
                "spinodal data needs amplitude >= 0 and cutoff >= 1, got {amplitude}, {cutoff}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rms = amplitude * grid.area().sqrt();
        let phi = random_with_norm(grid, cutoff, rms, &mut rng);
        State::new(t, phi, VelocityField::zeros(grid))
    }

    pub fn grid(&self) -> &GridSpec {
        self.phi.grid()
    }

    /// ‖φ‖² + ‖u‖².
    pub fn l2_norm_sq(&self) -> f64 {
        self.phi.l2_norm().powi(2) + self.u.l2_norm().powi(2)
    }
}

/// Per-step scalar diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mean_phi: f64,
    pub e_phi: f64,
    pub e_kin: f64,
    pub e_total: f64,
    pub u_l2: f64,
    pub phi_l2: f64,
    pub phi_h1: f64,
    pub phi_h2: f64,
    pub phi_h3: f64,
    /// ‖U‖ over the step that ended at `t` (the first interval's value at the start).
    pub control_l2: f64,
    /// `𝒦 m ‖∇μ(φ)‖² + ν ‖∇u‖²`.
    pub dissipation: f64,
}

impl Diagnostics {
    /// `𝒦·E(φ) + ½‖u‖²`.
    pub fn lyapunov(&self, capillary: f64) -> f64 {
        capillary * self.e_phi + self.e_kin
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub diagnostics: Vec<Diagnostics>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory has at least one state")
    }

    pub fn initial_state(&self) -> &State {
        &self.states[0]
    }
}

/// Fourier-space integrator carrying `(φ, u)` between steps.
pub(crate) struct Stepper {
    grid: GridSpec,
    fft: Fft2,
    kx: Vec<f64>,
    ky: Vec<f64>,
    k2: Vec<f64>,
    keep: Vec<bool>,
    params: Params,
    pot: PotentialSpec,
    scheme: SchemeConfig,
    pub(crate) t: f64,
    phi_hat: Vec<Complex64>,
    phi: Vec<f64>,
    /// Spectrum of `f(φ)` for the current φ, masked when dealiasing.
    fphi_hat: Vec<Complex64>,
    ux_hat: Vec<Complex64>,
    uy_hat: Vec<Complex64>,
    ux: Vec<f64>,
    uy: Vec<f64>,
    /// `𝒦m‖∇μ‖² + ν‖∇u‖²` from the last step, with the step's own μ.
    pub(crate) step_dissipation: f64,
}

/// Spectrum of a control value.
pub(crate) struct ControlSpectrum {
    x: Vec<Complex64>,
    y: Vec<Complex64>,
    norm: f64,
    zero: bool,
}

impl Stepper {
    pub(crate) fn new(s: &State, params: Params, pot: PotentialSpec, scheme: SchemeConfig) -> Self {
        let grid = *s.grid();
        let n = grid.len();
        let wn = grid.wavenumbers();
        let mut kx = vec![0.0; n];
        let mut ky = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut keep = vec![true; n];
        for i in 0..n {
            let (ix, iy) = (i % grid.nx, i / grid.nx);
            kx[i] = wn.kx[ix];
            ky[i] = wn.ky[iy];
            k2[i] = wn.k2(ix, iy);
            keep[i] = !scheme.dealias || wn.keep(ix, iy);
        }
        let mut st = Stepper {
            grid,
            fft: Fft2::new(grid),
            kx,
            ky,
            k2,
            keep,
            params,
            pot,
            scheme,
            t: s.t,
            phi_hat: vec![Complex64::default(); n],
            phi: s.phi.values().to_vec(),
            fphi_hat: vec![Complex64::default(); n],
            ux_hat: vec![Complex64::default(); n],
            uy_hat: vec![Complex64::default(); n],
            ux: s.u.ux().to_vec(),
            uy: s.u.uy().to_vec(),
            step_dissipation: 0.0,
        };
        st.fft.forward_real(&st.phi, &mut st.phi_hat);
        st.fft
            .forward_real_pair(&st.ux, &st.uy, &mut st.ux_hat, &mut st.uy_hat);
        st.refresh_bulk();
        st
    }

    fn mask(&self, c: &mut [Complex64]) {
        for (v, &k) in c.iter_mut().zip(&self.keep) {
            if !k {
                *v = Complex64::default();
            }
        }
    }

    fn refresh_bulk(&mut self) {
        let f = self.pot.f;
        let bulk: Vec<f64> = self.phi.iter().map(|&v| f(v)).collect();
        let mut out = std::mem::take(&mut self.fphi_hat);
        self.fft.forward_real(&bulk, &mut out);
        self.mask(&mut out);
        self.fphi_hat = out;
    }

    pub(crate) fn control_spectrum(&mut self, u: &VelocityField) -> ControlSpectrum {
        let n = self.grid.len();
        let mut x = vec![Complex64::default(); n];
        let mut y = vec![Complex64::default(); n];
        let norm = u.l2_norm();
        let zero = u.ux().iter().chain(u.uy()).all(|&v| v == 0.0);
        if !zero {
            self.fft.forward_real_pair(u.ux(), u.uy(), &mut x, &mut y);
        }
        ControlSpectrum { x, y, norm, zero }
    }

    fn deriv_pair(&mut self, c: &[Complex64], out_x: &mut [f64], out_y: &mut [f64]) {
        let n = c.len();
        let mut cx = vec![Complex64::default(); n];
        let mut cy = vec![Complex64::default(); n];
        for i in 0..n {
            cx[i] = Complex64::new(0.0, self.kx[i]) * c[i];
            cy[i] = Complex64::new(0.0, self.ky[i]) * c[i];
        }
        self.fft.inverse_real_pair(&cx, &cy, out_x, out_y);
    }

    /// Advances by `dt` under control spectrum `ctrl`.
    pub(crate) fn advance(&mut self, ctrl: &ControlSpectrum, dt: f64) -> Result<()> {
        let n = self.grid.len();
        let Params {
            nu,
            mobility: m,
            capillary: cap,
            ..
        } = self.params;
        let s = self.scheme.stabilization;

        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        let phi_hat = std::mem::take(&mut self.phi_hat);
        self.deriv_pair(&phi_hat, &mut gx, &mut gy);
        let ux_hat = std::mem::take(&mut self.ux_hat);
        let uy_hat = std::mem::take(&mut self.uy_hat);
        let (mut uxx, mut uxy, mut uyx, mut uyy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        self.deriv_pair(&ux_hat, &mut uxx, &mut uxy);
        self.deriv_pair(&uy_hat, &mut uyx, &mut uyy);

        let mut transport = vec![0.0; n];
        let mut conv_x = vec![0.0; n];
        let mut conv_y = vec![0.0; n];
        for i in 0..n {
            let (a, b) = (self.ux[i], self.uy[i]);
            transport[i] = a * gx[i] + b * gy[i];
            conv_x[i] = a * uxx[i] + b * uxy[i];
            conv_y[i] = a * uyx[i] + b * uyy[i];
        }
        let mut b1_hat = vec![Complex64::default(); n];
        self.fft.forward_real(&transport, &mut b1_hat);
        self.mask(&mut b1_hat);
        let mut cx_hat = vec![Complex64::default(); n];
        let mut cy_hat = vec![Complex64::default(); n];
        self.fft
            .forward_real_pair(&conv_x, &conv_y, &mut cx_hat, &mut cy_hat);
        self.mask(&mut cx_hat);
        self.mask(&mut cy_hat);

        // Cahn-Hilliard update and the chemical potential it implies.
        let mut phi_new_hat = vec![Complex64::default(); n];
        let mut mu_hat = vec![Complex64::default(); n];
        for i in 0..n {
            let k2 = self.k2[i];
            let rhs = phi_hat[i] * (1.0 + dt * m * s * k2) - dt * (b1_hat[i] + m * k2 * self.fphi_hat[i]);
            let p = rhs / (1.0 + dt * m * k2 * k2 + dt * m * s * k2);
            phi_new_hat[i] = p;
            mu_hat[i] = k2 * p + self.fphi_hat[i] + s * (p - phi_hat[i]);
        }
        let mut mu = vec![0.0; n];
        let mut phi_new = vec![0.0; n];
        self.fft
            .inverse_real_pair(&mu_hat, &phi_new_hat, &mut mu, &mut phi_new);

        // Capillary force μ∇φ at the old φ.
        let fx: Vec<f64> = mu.iter().zip(&gx).map(|(a, b)| a * b).collect();
        let fy: Vec<f64> = mu.iter().zip(&gy).map(|(a, b)| a * b).collect();
        let mut fx_hat = vec![Complex64::default(); n];
        let mut fy_hat = vec![Complex64::default(); n];
        self.fft.forward_real_pair(&fx, &fy, &mut fx_hat, &mut fy_hat);
        self.mask(&mut fx_hat);
        self.mask(&mut fy_hat);

        let mut new_ux_hat = vec![Complex64::default(); n];
        let mut new_uy_hat = vec![Complex64::default(); n];
        for i in 0..n {
            let (mut rx, mut ry) = (
                ux_hat[i] + dt * (cap * fx_hat[i] - cx_hat[i]),
                uy_hat[i] + dt * (cap * fy_hat[i] - cy_hat[i]),
            );
            if !ctrl.zero {
                rx += dt * ctrl.x[i];
                ry += dt * ctrl.y[i];
            }
            let d = 1.0 + dt * nu * self.k2[i];
            new_ux_hat[i] = rx / d;
            new_uy_hat[i] = ry / d;
        }
        let wn = self.grid.wavenumbers();
        project_spectral(&wn, self.grid.nx, &mut new_ux_hat, &mut new_uy_hat);
        let grad_mu = self.spectral_sum(&mu_hat, |k2| k2);
        let grad_u = self.spectral_sum(&new_ux_hat, |k2| k2) + self.spectral_sum(&new_uy_hat, |k2| k2);
        self.step_dissipation = cap * m * grad_mu + nu * grad_u;
        self.fft
            .inverse_real_pair(&new_ux_hat, &new_uy_hat, &mut self.ux, &mut self.uy);

        self.phi_hat = phi_new_hat;
        self.phi = phi_new;
        self.ux_hat = new_ux_hat;
        self.uy_hat = new_uy_hat;
        self.t += dt;
        self.refresh_bulk();
        self.check_blowup()
    }

    fn spectral_sum(&self, c: &[Complex64], w: impl Fn(f64) -> f64) -> f64 {
        c.iter().zip(&self.k2).map(|(v, &k2)| w(k2) * v.norm_sqr()).sum::<f64>() * self.grid.area()
    }

    fn check_blowup(&self) -> Result<()> {
        let u2 = self.spectral_sum(&self.ux_hat, |_| 1.0) + self.spectral_sum(&self.uy_hat, |_| 1.0);
        let h1 = self.spectral_sum(&self.phi_hat, |k2| 1.0 + k2);
        let cap = self.scheme.blowup_cap;
        for (what, v) in [("||u||", u2.sqrt()), ("||phi||_H1", h1.sqrt())] {
            if !v.is_finite() || v > cap {
                return Err(ChnsError::BlowUp {
                    t: self.t,
                    what,
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// ‖φ‖² and ‖u‖² from Parseval.
    pub(crate) fn state_norms_sq(&self) -> (f64, f64) {
        (
            self.spectral_sum(&self.phi_hat, |_| 1.0),
            self.spectral_sum(&self.ux_hat, |_| 1.0) + self.spectral_sum(&self.uy_hat, |_| 1.0),
        )
    }

    pub(crate) fn diagnostics(&self, control_l2: f64) -> Diagnostics {
        let area = self.grid.area();
        let cell = self.grid.cell_area();
        let (phi2, u2) = self.state_norms_sq();
        let grad2 = self.spectral_sum(&self.phi_hat, |k2| k2);
        let lap2 = self.spectral_sum(&self.phi_hat, |k2| k2 * k2);
        let h3 = self.spectral_sum(&self.phi_hat, |k2| k2 * k2 * k2);
        let big_f = self.pot.big_f;
        let bulk: f64 = self.phi.iter().map(|&v| big_f(v)).sum::<f64>() * cell;
        let e_phi = 0.5 * grad2 + bulk;
        let e_kin = 0.5 * u2;
        let mut grad_mu = 0.0;
        let mut grad_u = 0.0;
        for i in 0..self.k2.len() {
            let k2 = self.k2[i];
            let mu = k2 * self.phi_hat[i] + self.fphi_hat[i];
            grad_mu += k2 * mu.norm_sqr();
            grad_u += k2 * (self.ux_hat[i].norm_sqr() + self.uy_hat[i].norm_sqr());
        }
        let p = self.params;
        Diagnostics {
            t: self.t,
            mean_phi: self.phi.iter().sum::<f64>() / self.phi.len() as f64,
            e_phi,
            e_kin,
            e_total: e_phi + e_kin,
            u_l2: u2.sqrt(),
            phi_l2: phi2.sqrt(),
            phi_h1: (phi2 + grad2).sqrt(),
            phi_h2: (phi2 + grad2 + lap2).sqrt(),
            phi_h3: h3.sqrt(),
            control_l2,
            dissipation: area * (p.capillary * p.mobility * grad_mu + p.nu * grad_u),
        }
    }

    pub(crate) fn state(&self) -> State {
        State {
            t: self.t,
            phi: ScalarField::from_values_unchecked(self.grid, self.phi.clone()),
            u: VelocityField::from_components_unchecked(self.grid, self.ux.clone(), self.uy.clone()),
        }
    }
}

/// One step of size `c.dt` with a constant control value.
pub fn step(s: &State, control: &VelocityField, p: &Params, c: &SchemeConfig) -> Result<State> {
    p.validate()?;
    c.validate()?;
    if control.grid() != s.grid() {
        return Err(ChnsError::mismatch(s.grid(), control.grid()));
    }
    ensure_solenoidal(control)?;
    let mut st = Stepper::new(s, *p, PotentialSpec::default(), *c);
    let ctrl = st.control_spectrum(control);
    st.advance(&ctrl, c.dt)?;
    Ok(st.state())
}

/// Splits `[a, b]` into the fewest equal steps no longer than `dt`.
pub(crate) fn substeps(a: f64, b: f64, dt: f64) -> (usize, f64) {
    let n = (((b - a) / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, (b - a) / n as f64)
}

/// Callback-driven integration shared by [`simulate`] and cost evaluation.
/// `on_step(stepper, dt, control_norm)` runs after every step.
pub(crate) fn integrate(
    s0: &State,
    control: &ControlSignal,
    t_end: f64,
    p: &Params,
    pot: &PotentialSpec,
    c: &SchemeConfig,
    mut on_step: impl FnMut(&Stepper, f64, f64),
) -> Result<Stepper> {
    p.validate()?;
    c.validate()?;
    if !(t_end > s0.t) {
        return Err(ChnsError::DegenerateWindow { tau: s0.t, end: t_end });
    }
    if control.grid() != s0.grid() {
        return Err(ChnsError::mismatch(s0.grid(), control.grid()));
    }
    let (tau, end) = control.window();
    let slack = 1e-12 * (1.0 + end.abs());
    if s0.t < tau - slack || t_end > end + slack {
        return Err(ChnsError::InvalidControl(format!(
            "window [{tau}, {end}] does not cover [{}, {t_end}]",
            s0.t
        )));
    }
    let mut st = Stepper::new(s0, *p, *pot, *c);
    let bp = control.breakpoints();
    for (j, value) in control.values().iter().enumerate() {
        let a = bp[j].max(s0.t);
        let b = bp[j + 1].min(t_end);
        if b <= a {
            continue;
        }
        let spec = st.control_spectrum(value);
        let (n, h) = substeps(a, b, c.dt);
        for k in 0..n {
            st.advance(&spec, h)?;
            // land exactly on the breakpoint
            st.t = if k + 1 == n { b } else { a + (k + 1) as f64 * h };
            on_step(&st, h, spec.norm);
        }
    }
    Ok(st)
}

/// Integrates from `s0` to `t_end` under `control`, recording per-step
/// diagnostics and snapshots every `c.snapshot_every` steps plus both ends.
pub fn simulate(s0: &State, control: &ControlSignal, t_end: f64, p: &Params, c: &SchemeConfig) -> Result<Trajectory> {
    simulate_with(s0, control, t_end, p, &PotentialSpec::default(), c)
}

pub fn simulate_with(
    s0: &State,
    control: &ControlSignal,
    t_end: f64,
    p: &Params,
    pot: &PotentialSpec,
    c: &SchemeConfig,
) -> Result<Trajectory> {
    let first = control.value_at(s0.t).map(|v| v.l2_norm()).unwrap_or(0.0);
    let init = Stepper::new(s0, *p, *pot, *c);
    let mut diagnostics = vec![init.diagnostics(first)];
    let mut states = vec![s0.clone()];
    let mut count = 0usize;
    let last = integrate(s0, control, t_end, p, pot, c, |st, _, norm| {
        diagnostics.push(st.diagnostics(norm));
        count += 1;
        if c.snapshot_every > 0 && count % c.snapshot_every == 0 {
            states.push(st.state());
        }
    })?;
    if states.last().map(|s| s.t) != Some(last.t) {
        states.push(last.state());
    }
    Ok(Trajectory { states, diagnostics })
}
