//! Helpers shared by the integration tests: closed-form trigonometric
//! polynomials evaluated mode by mode (no FFT), and canned states.
#![allow(dead_code)]

use std::f64::consts::PI;

use chns_core::grid::{random_band_limited, random_solenoidal};
use chns_core::{GridSpec, ScalarField, State, VelocityField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `Σ a cos(k·x) + b sin(k·x)` with `k = 2π j / L`.
#[derive(Clone, Debug)]
pub struct Trig {
    pub length: f64,
    pub modes: Vec<(i64, i64, f64, f64)>,
}

impl Trig {
    /// `count` random nonzero modes with `|jx|, |jy| <= jmax`.
    pub fn random(rng: &mut ChaCha8Rng, length: f64, jmax: i64, count: usize) -> Self {
        let modes = (0..count)
            .map(|_| loop {
                let jx = rng.gen_range(-jmax..=jmax);
                let jy = rng.gen_range(-jmax..=jmax);
                if jx != 0 || jy != 0 {
                    break (jx, jy, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            })
            .collect();
        Trig { length, modes }
    }

    fn k(&self, j: i64) -> f64 {
        2.0 * PI * j as f64 / self.length
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.modes
            .iter()
            .map(|&(jx, jy, a, b)| {
                let th = self.k(jx) * x + self.k(jy) * y;
                a * th.cos() + b * th.sin()
            })
            .sum()
    }

    /// `(∂x, ∂y)`.
    pub fn grad(&self, x: f64, y: f64) -> (f64, f64) {
        let mut g = (0.0, 0.0);
        for &(jx, jy, a, b) in &self.modes {
            let (kx, ky) = (self.k(jx), self.k(jy));
            let th = kx * x + ky * y;
            let d = -a * th.sin() + b * th.cos();
            g.0 += kx * d;
            g.1 += ky * d;
        }
        g
    }

    /// `(∂xx, ∂xy, ∂yy)`.
    pub fn hessian(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let mut h = (0.0, 0.0, 0.0);
        for &(jx, jy, a, b) in &self.modes {
            let (kx, ky) = (self.k(jx), self.k(jy));
            let th = kx * x + ky * y;
            let d = -(a * th.cos() + b * th.sin());
            h.0 += kx * kx * d;
            h.1 += kx * ky * d;
            h.2 += ky * ky * d;
        }
        h
    }

    pub fn sample(&self, g: GridSpec) -> ScalarField {
        ScalarField::from_fn(g, |x, y| self.value(x, y))
    }
}

/// Divergence-free field `(∂yψ, −∂xψ)` of a stream function.
#[derive(Clone, Debug)]
pub struct TrigVelocity {
    pub psi: Trig,
}

impl TrigVelocity {
    pub fn value(&self, x: f64, y: f64) -> (f64, f64) {
        let (px, py) = self.psi.grad(x, y);
        (py, -px)
    }

    /// `[[∂x ux, ∂y ux], [∂x uy, ∂y uy]]`.
    pub fn jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        let (hxx, hxy, hyy) = self.psi.hessian(x, y);
        [[hxy, hyy], [-hxx, -hxy]]
    }

    pub fn sample(&self, g: GridSpec) -> VelocityField {
        VelocityField::from_fn(g, |x, y| self.value(x, y))
    }
}

/// Rectangle rule over the grid nodes; exact for
/// trigonometric polynomials with all modes below the Nyquist frequency.
pub fn quadrature(g: GridSpec, f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut s = 0.0;
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            let (x, y) = g.point(ix, iy);
            s += f(x, y);
        }
    }
    s * g.cell_area()
}

/// Smooth data: band-limited φ with sup norm 0.5 and u with L² norm 1.
pub fn smooth_state(g: GridSpec, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = random_band_limited(g, 3.0, &mut rng);
    let phi = phi.scale(0.5 / phi.linf_norm());
    let u = random_solenoidal(g, 3.0, &mut rng);
    let u = u.scale(1.0 / u.l2_norm());
    State::new(0.0, phi, u).unwrap()
}

/// A moving state for control problems: φ with RMS 0.1, u with L² norm 1.
pub fn control_state(g: GridSpec, seed: u64) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = random_band_limited(g, 4.0, &mut rng);
    let phi = phi.scale(0.1 * g.area().sqrt() / phi.l2_norm());
    let u = random_solenoidal(g, 4.0, &mut rng);
    let u = u.scale(1.0 / u.l2_norm());
    State::new(0.0, phi, u).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
