use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ChnsError, Result};
use crate::grid::{ensure_solenoidal, random_solenoidal, VelocityField};

/// `inf_{‖U‖<=R} (U, p) + ½‖U‖²` as a function of `‖p‖`:
/// `−½‖p‖²` inside the ball, `−R‖p‖ + ½R²` outside.
pub fn hamiltonian_closed(p_norm: f64, r: f64) -> Result<f64> {
    if !(p_norm >= 0.0) || !(r >= 0.0) {
        return Err(ChnsError::InvalidParameter(format!(
            "hamiltonian needs ||p|| >= 0 and R >= 0, got {p_norm}, {r}"
        )));
    }
    Ok(if p_norm <= r {
        0.0 - 0.5 * p_norm * p_norm
    } else {
        -r * p_norm + 0.5 * r * r
    })
}

/// Minimizer of `U ↦ (U, p) + ½‖U‖²` over the R-ball: `−p` inside, `−pR/‖p‖` outside.
pub fn feedback_sigma(p: &VelocityField, r: f64) -> Result<VelocityField> {
    if !(r >= 0.0) {
        return Err(ChnsError::InvalidParameter(format!("R = {r}")));
    }
    ensure_solenoidal(p)?;
    let n = p.l2_norm();
    Ok(if n <= r { p.scale(-1.0) } else { p.scale(-r / n) })
}

/// `(U, p) + ½‖U‖²`.
pub fn hamiltonian_objective(u: &VelocityField, p: &VelocityField) -> Result<f64> {
    Ok(u.inner(p)? + 0.5 * u.l2_norm().powi(2))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BruteForceHamiltonian {
    /// Minimum over the samples and the candidates `0` and `σ(p)`.
    pub value: f64,
    /// Minimum over the random samples alone.
    pub sampled_min: f64,
    pub closed: f64,
    pub samples: usize,
}

/// Number of random directions orthogonal to `p` cycled through by the sampler.
const DIRECTIONS: usize = 16;

/// Brute-force minimization of the Hamiltonian objective over `n` sampled
/// divergence-free controls in the R-ball.
///
/// The objective is invariant under rotations that fix `p`, so each sample is
/// drawn in a plane spanned by `p/‖p‖` and a random solenoidal direction
/// orthogonal to it. Points are laid out by a randomly rotated sunflower
/// lattice in the disk (70%) plus equispaced points on its rim (30%), which
/// covers the disk uniformly at a resolution of about `R·(π/n)^½`.
/// Every objective value is computed from the assembled fields.
pub fn hamiltonian_bruteforce(p: &VelocityField, r: f64, n: usize, seed: u64) -> Result<BruteForceHamiltonian> {
    if n == 0 {
        return Err(ChnsError::InvalidParameter("need at least one sample".into()));
    }
    let sigma = feedback_sigma(p, r)?;
    let grid = *p.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pn = p.l2_norm();
    let cutoff = (grid.nx.min(grid.ny) / 4) as f64;

    let e1 = if pn > 0.0 {
        p.scale(-1.0 / pn)
    } else {
        let w = random_solenoidal(grid, cutoff, &mut rng);
        let wn = w.l2_norm();
        w.scale(1.0 / wn)
    };
    let mut dirs = Vec::with_capacity(DIRECTIONS);
    while dirs.len() < DIRECTIONS {
        let w = random_solenoidal(grid, cutoff, &mut rng);
        let w = w.combine(1.0, &e1, -w.inner(&e1)?)?;
        let wn = w.l2_norm();
        if wn > 1e-8 {
            dirs.push(w.scale(1.0 / wn));
        }
    }

    let n_rim = (n * 3) / 10;
    let n_disk = n - n_rim;
    let golden = PI * (3.0 - 5f64.sqrt());
    let rot: f64 = rng.gen::<f64>() * 2.0 * PI;
    let rim_shift: f64 = rng.gen();
    let mut sampled_min = f64::INFINITY;
    for i in 0..n {
        let (rad, theta) = if i < n_disk {
            (r * ((i as f64 + 0.5) / n_disk as f64).sqrt(), rot + golden * i as f64)
        } else {
            let j = (i - n_disk) as f64;
            (r, 2.0 * PI * (j + rim_shift) / n_rim as f64)
        };
        let w = &dirs[i % DIRECTIONS];
        let u = e1.combine(rad * theta.cos(), w, rad * theta.sin())?;
        sampled_min = sampled_min.min(hamiltonian_objective(&u, p)?);
    }
    let at_sigma = hamiltonian_objective(&sigma, p)?;
    let value = sampled_min.min(0.0).min(at_sigma);
    Ok(BruteForceHamiltonian {
        value,
        sampled_min,
        closed: hamiltonian_closed(pn, r)?,
        samples: n,
    })
}
