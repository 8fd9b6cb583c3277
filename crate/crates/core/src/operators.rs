//! Stokes, Neumann and transport operators of the coupled system, the
//! double-well potential, chemical potential and energies.

use serde::{Deserialize, Serialize};

use crate::error::{ChnsError, Result};
use crate::grid::{self, ensure_solenoidal, grad, laplacian, leray_project, ScalarField, VelocityField};

/// Bulk potential `F` with derivative `f = F'`.
#[derive(Clone, Copy, Debug)]
pub struct PotentialSpec {
    pub f: fn(f64) -> f64,
    pub big_f: fn(f64) -> f64,
    /// Polynomial growth exponent `m` in `|f''(s)| <= C (1 + |s|^{m-1})`.
    pub growth_m: u32,
}

fn double_well_f(s: f64) -> f64 {
    4.0 * s * s * s - 2.0 * s
}

fn double_well_big_f(s: f64) -> f64 {
    let s2 = s * s;
    s2 * (s2 - 1.0)
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::double_well()
    }
}

impl PotentialSpec {
    /// `F(s) = s²(s² − 1)`, `f(s) = 4s³ − 2s`.
    pub fn double_well() -> Self {
        PotentialSpec {
            f: double_well_f,
            big_f: double_well_big_f,
            growth_m: 2,
        }
    }

    /// Largest relative mismatch between `f` and a central difference of `F`
    /// over `samples` points in `[-range, range]`.
    pub fn derivative_mismatch(&self, samples: usize, range: f64) -> f64 {
        let h = 1e-5;
        (0..samples)
            .map(|i| {
                let s = -range + 2.0 * range * (i as f64 + 0.5) / samples as f64;
                let fd = ((self.big_f)(s + h) - (self.big_f)(s - h)) / (2.0 * h);
                let exact = (self.f)(s);
                (fd - exact).abs() / exact.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }

    /// Checks `|f''(s)| <= c_f (1 + |s|^{m-1})` on samples in `[-range, range]`.
    pub fn satisfies_growth(&self, c_f: f64, samples: usize, range: f64) -> bool {
        let h = 1e-4;
        (0..samples).all(|i| {
            let s = -range + 2.0 * range * (i as f64 + 0.5) / samples as f64;
            let f2 = ((self.f)(s + h) - 2.0 * (self.f)(s) + (self.f)(s - h)) / (h * h);
            f2.abs() <= c_f * (1.0 + s.abs().powi(self.growth_m as i32 - 1)) + 1e-6
        })
    }
}

/// Physical constants of the controlled system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub nu: f64,
    pub mobility: f64,
    pub capillary: f64,
    /// Radius of the control ball.
    #[serde(rename = "R")]
    pub r: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            nu: 1.0,
            mobility: 1.0,
            capillary: 1.0,
            r: 1.0,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("nu", self.nu), ("mobility", self.mobility), ("capillary", self.capillary)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ChnsError::InvalidParameter(format!("{name} = {v} must be > 0")));
            }
        }
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(ChnsError::InvalidParameter(format!("R = {} must be >= 0", self.r)));
        }
        Ok(())
    }
}

fn pointwise(a: &ScalarField, b: &ScalarField) -> ScalarField {
    a.product(b).expect("fields share a grid")
}

/// `A u = −P Δu`.
pub fn stokes_a(u: &VelocityField) -> Result<VelocityField> {
    ensure_solenoidal(u)?;
    let lap = VelocityField::from_scalars(laplacian(&u.x()), laplacian(&u.y()))?;
    Ok(leray_project(&lap.scale(-1.0)))
}

/// `A_N f = −Δf`.
pub fn neumann_an(f: &ScalarField) -> ScalarField {
    laplacian(f).scale(-1.0)
}

/// `B(u, v) = P[(u·∇)v]`, dealiased.
pub fn convective_b(u: &VelocityField, v: &VelocityField) -> Result<VelocityField> {
    ensure_solenoidal(u)?;
    if u.grid() != v.grid() {
        return Err(ChnsError::mismatch(u.grid(), v.grid()));
    }
    let (ux, uy) = (u.x(), u.y());
    let gx = grad(&v.x());
    let gy = grad(&v.y());
    let cx = pointwise(&ux, &gx.x()).add(&pointwise(&uy, &gx.y()))?;
    let cy = pointwise(&ux, &gy.x()).add(&pointwise(&uy, &gy.y()))?;
    let c = VelocityField::from_scalars(grid::dealias(&cx), grid::dealias(&cy))?;
    Ok(leray_project(&c))
}

/// `B1(u, φ) = u·∇φ`, dealiased.
pub fn transport_b1(u: &VelocityField, f: &ScalarField) -> Result<ScalarField> {
    ensure_solenoidal(u)?;
    if u.grid() != f.grid() {
        return Err(ChnsError::mismatch(u.grid(), f.grid()));
    }
    let g = grad(f);
    let t = pointwise(&u.x(), &g.x()).add(&pointwise(&u.y(), &g.y()))?;
    Ok(grid::dealias(&t))
}

/// `B2(μ, φ) = P[μ ∇φ]`, dealiased.
pub fn capillary_b2(mu: &ScalarField, f: &ScalarField) -> Result<VelocityField> {
    if mu.grid() != f.grid() {
        return Err(ChnsError::mismatch(mu.grid(), f.grid()));
    }
    let g = grad(f);
    let force = VelocityField::from_scalars(
        grid::dealias(&pointwise(mu, &g.x())),
        grid::dealias(&pointwise(mu, &g.y())),
    )?;
    Ok(leray_project(&force))
}

/// `μ = −Δφ + f(φ)` with the nonlinearity dealiased.
pub fn chemical_potential(f: &ScalarField, pot: &PotentialSpec) -> ScalarField {
    let bulk = grid::dealias(&f.map(pot.f));
    neumann_an(f).add(&bulk).expect("same grid")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    /// `½‖∇φ‖² + ∫F(φ)`.
    pub phi: f64,
    /// `½‖u‖²`.
    pub kinetic: f64,
    /// `phi + kinetic`.
    pub total: f64,
}

impl Energy {
    /// `𝒦·E(φ) + ½‖u‖²`, nonincreasing along uncontrolled trajectories.
    pub fn lyapunov(&self, capillary: f64) -> f64 {
        capillary * self.phi + self.kinetic
    }
}

pub fn free_energy(f: &ScalarField, pot: &PotentialSpec) -> f64 {
    0.5 * f.h1_seminorm().powi(2) + f.map(pot.big_f).integral()
}

pub fn energy(f: &ScalarField, u: &VelocityField, pot: &PotentialSpec) -> Energy {
    let phi = free_energy(f, pot);
    let kinetic = 0.5 * u.l2_norm().powi(2);
    Energy {
        phi,
        kinetic,
        total: phi + kinetic,
    }
}
