//! Distributed controls, the quadratic cost functional and its value function.

mod hamiltonian;
mod value;

pub use hamiltonian::{
    feedback_sigma, hamiltonian_bruteforce, hamiltonian_closed, hamiltonian_objective, BruteForceHamiltonian,
};
pub use value::{
    dpp_residual, value_estimate, DppCandidate, DppReport, OptimizerConfig, ValueEstimate, ValueEstimateJson,
    WindowJson,
};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ChnsError, Result};
use crate::grid::{ensure_solenoidal, GridSpec, VelocityField};
use crate::integrator::{integrate, SchemeConfig, State};
use crate::operators::{Params, PotentialSpec};

/// Piecewise-constant-in-time divergence-free forcing.
///
/// `breakpoints` runs from the window start to the window end; `values[j]`
/// acts on `[breakpoints[j], breakpoints[j + 1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    breakpoints: Vec<f64>,
    values: Vec<VelocityField>,
}

impl ControlSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<VelocityField>) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(ChnsError::InvalidControl(format!(
                "{} breakpoints for {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) || breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ChnsError::InvalidControl("breakpoints must be strictly increasing".into()));
        }
        let grid = *values[0].grid();
        for v in &values {
            if *v.grid() != grid {
                return Err(ChnsError::mismatch(grid, v.grid()));
            }
            ensure_solenoidal(v)?;
        }
        Ok(ControlSignal { breakpoints, values })
    }

    /// `U ≡ 0` on `[tau, end]`.
    pub fn zero(grid: GridSpec, tau: f64, end: f64) -> Self {
        ControlSignal {
            breakpoints: vec![tau, end],
            values: vec![VelocityField::zeros(grid)],
        }
    }

    pub fn constant(value: VelocityField, tau: f64, end: f64) -> Result<Self> {
        Self::new(vec![tau, end], vec![value])
    }

    pub fn grid(&self) -> &GridSpec {
        self.values[0].grid()
    }

    pub fn window(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[VelocityField] {
        &self.values
    }

    /// Value active at `t` (right-continuous; the last interval is closed).
    pub fn value_at(&self, t: f64) -> Option<&VelocityField> {
        let (a, b) = self.window();
        if t < a || t > b {
            return None;
        }
        let j = self.breakpoints[1..].iter().position(|&bp| t < bp).unwrap_or(self.values.len() - 1);
        Some(&self.values[j])
    }

    /// Largest ‖U(t)‖ over the window.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.l2_norm()).fold(0.0, f64::max)
    }

    pub fn check_ball(&self, r: f64) -> Result<()> {
        let m = self.max_norm();
        if m > r * (1.0 + 1e-12) + 1e-12 {
            return Err(ChnsError::InvalidControl(format!("||U|| = {m} exceeds R = {r}")));
        }
        Ok(())
    }

    /// The same forcing restricted to `[a, b]`.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Self> {
        let (lo, hi) = self.window();
        if !(a >= lo && b <= hi && b > a) {
            return Err(ChnsError::DegenerateWindow { tau: a, end: b });
        }
        let mut bps = vec![a];
        let mut vals = Vec::new();
        for (j, v) in self.values.iter().enumerate() {
            let (s, e) = (self.breakpoints[j].max(a), self.breakpoints[j + 1].min(b));
            if e > s {
                if s > *bps.last().unwrap() {
                    bps.push(s);
                }
                vals.push(v.clone());
                bps.push(e);
            }
        }
        bps.dedup();
        Ok(ControlSignal {
            breakpoints: bps,
            values: vals,
        })
    }

    /// `self` followed by `next`; the windows must abut.
    pub fn concat(&self, next: &ControlSignal) -> Result<Self> {
        let (_, end) = self.window();
        let (start, _) = next.window();
        if (end - start).abs() > 1e-12 * (1.0 + end.abs()) {
            return Err(ChnsError::InvalidControl(format!("windows do not abut at {end} / {start}")));
        }
        let mut breakpoints = self.breakpoints.clone();
        breakpoints.extend_from_slice(&next.breakpoints[1..]);
        let mut values = self.values.clone();
        values.extend(next.values.iter().cloned());
        Ok(ControlSignal { breakpoints, values })
    }
}

/// Radial projection onto `{‖v‖ <= R}`.
pub fn project_to_ball(v: &VelocityField, r: f64) -> VelocityField {
    let n = v.l2_norm();
    if n <= r {
        v.clone()
    } else if r <= 0.0 {
        VelocityField::zeros(*v.grid())
    } else {
        v.scale(r / n)
    }
}

/// Projects a coefficient vector onto the Euclidean ball of radius `r`.
pub(crate) fn project_coeffs(c: &mut [f64], r: f64) {
    let n = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > r {
        let s = if r > 0.0 { r / n } else { 0.0 };
        c.iter_mut().for_each(|x| *x *= s);
    }
}

/// L²-orthonormal divergence-free fields from the lowest stream-function modes
/// `ψ = cos(k·x)`, `ψ = sin(k·x)`.
#[derive(Clone, Debug)]
pub struct SolenoidalBasis {
    grid: GridSpec,
    fields: Vec<VelocityField>,
}

impl SolenoidalBasis {
    pub fn new(grid: GridSpec, count: usize) -> Self {
        // half-plane wave vectors ordered by |j|², then by angle
        let mut wave: Vec<(i64, i64)> = Vec::new();
        let lim = 4i64.max((count as f64).sqrt().ceil() as i64 + 2);
        for jx in 0..=lim {
            for jy in -lim..=lim {
                if jx > 0 || (jx == 0 && jy > 0) {
                    wave.push((jx, jy));
                }
            }
        }
        wave.sort_by(|a, b| {
            let na = a.0 * a.0 + a.1 * a.1;
            let nb = b.0 * b.0 + b.1 * b.1;
            na.cmp(&nb).then_with(|| {
                let ta = (a.1 as f64).atan2(a.0 as f64);
                let tb = (b.1 as f64).atan2(b.0 as f64);
                tb.partial_cmp(&ta).unwrap()
            })
        });
        let k0 = grid.base_wavenumber();
        let amp = (2.0 / grid.area()).sqrt();
        let mut fields = Vec::with_capacity(count);
        'outer: for (jx, jy) in wave {
            let (kx, ky) = (k0 * jx as f64, k0 * jy as f64);
            let kn = kx.hypot(ky);
            let (ex, ey) = (kx / kn, ky / kn);
            for phase in [0.0, -0.5 * PI] {
                if fields.len() == count {
                    break 'outer;
                }
                // ψ = cos(k·x + phase) ⇒ u = ∇^⊥ψ ∝ (−ky, kx) sin(k·x + phase) up to sign
                fields.push(VelocityField::from_fn(grid, |x, y| {
                    let s = (kx * x + ky * y + phase).sin();
                    (-amp * ey * s, amp * ex * s)
                }));
            }
        }
        SolenoidalBasis { grid, fields }
    }

    pub fn dim(&self) -> usize {
        self.fields.len()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn fields(&self) -> &[VelocityField] {
        &self.fields
    }

    pub fn field(&self, coeffs: &[f64]) -> VelocityField {
        assert_eq!(coeffs.len(), self.fields.len());
        let n = self.grid.len();
        let mut ux = vec![0.0; n];
        let mut uy = vec![0.0; n];
        for (c, f) in coeffs.iter().zip(&self.fields) {
            if *c == 0.0 {
                continue;
            }
            for i in 0..n {
                ux[i] += c * f.ux()[i];
                uy[i] += c * f.uy()[i];
            }
        }
        VelocityField::from_components_unchecked(self.grid, ux, uy)
    }

    pub fn coefficients(&self, v: &VelocityField) -> Result<Vec<f64>> {
        self.fields.iter().map(|f| f.inner(v)).collect()
    }
}

/// Control described by basis coefficients on each interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalControl {
    pub breakpoints: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
}

impl ModalControl {
    /// `intervals` equal intervals on `[tau, end]` with zero coefficients.
    pub fn zeros(tau: f64, end: f64, intervals: usize, dim: usize) -> Self {
        let breakpoints = (0..=intervals)
            .map(|j| {
                if j == intervals {
                    end
                } else {
                    tau + (end - tau) * j as f64 / intervals as f64
                }
            })
            .collect();
        ModalControl {
            breakpoints,
            modes: vec![vec![0.0; dim]; intervals],
        }
    }

    pub fn to_signal(&self, basis: &SolenoidalBasis) -> Result<ControlSignal> {
        if self.modes.iter().any(|m| m.len() != basis.dim()) {
            return Err(ChnsError::InvalidControl(format!(
                "mode vectors must have length {}",
                basis.dim()
            )));
        }
        let values = self.modes.iter().map(|m| basis.field(m)).collect();
        ControlSignal::new(self.breakpoints.clone(), values)
    }
}

/// Decomposed value of the quadratic cost.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// ½∫(‖φ‖² + ‖u‖²) dt
    pub running_state: f64,
    /// ½∫‖U‖² dt
    pub running_control: f64,
    /// ½(‖φ(T)‖² + ‖u(T)‖²)
    pub terminal: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn new(running_state: f64, running_control: f64, terminal: f64) -> Self {
        CostBreakdown {
            running_state,
            running_control,
            terminal,
            total: running_state + running_control + terminal,
        }
    }

    pub fn running(&self) -> f64 {
        self.running_state + self.running_control
    }
}

/// Cost over the control's window together with the final state.
pub fn evaluate_cost_with_state(
    s0: &State,
    control: &ControlSignal,
    p: &Params,
    c: &SchemeConfig,
) -> Result<(CostBreakdown, State)> {
    let (tau, end) = control.window();
    if (s0.t - tau).abs() > 1e-12 * (1.0 + tau.abs()) {
        return Err(ChnsError::InvalidControl(format!(
            "control window starts at {tau}, state is at {}",
            s0.t
        )));
    }
    let start = State {
        t: tau,
        ..s0.clone()
    };
    let mut prev = start.l2_norm_sq();
    let mut state_integral = 0.0;
    let mut control_integral = 0.0;
    let last = integrate(&start, control, end, p, &PotentialSpec::default(), c, |st, h, norm| {
        let (phi2, u2) = st.state_norms_sq();
        let cur = phi2 + u2;
        state_integral += 0.5 * h * (prev + cur);
        control_integral += h * norm * norm;
        prev = cur;
    })?;
    let cost = CostBreakdown::new(0.5 * state_integral, 0.5 * control_integral, 0.5 * prev);
    Ok((cost, last.state()))
}

/// `J(τ, ρ, v, U)` with trapezoidal time quadrature over the steps.
pub fn evaluate_cost(s0: &State, control: &ControlSignal, p: &Params, c: &SchemeConfig) -> Result<CostBreakdown> {
    evaluate_cost_with_state(s0, control, p, c).map(|(cost, _)| cost)
}
