use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_cost, evaluate_cost_with_state, project_coeffs, ControlSignal, ModalControl, SolenoidalBasis};
use crate::error::{ChnsError, Result};
use crate::grid::GridSpec;
use crate::integrator::{SchemeConfig, State};
use crate::operators::Params;

/// Budget and parameterization of the value-function search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    pub fd_passes: usize,
    pub fd_step: f64,
    pub seed: u64,
    /// Equal control intervals per window.
    pub intervals: usize,
    /// Stream-function modes per interval.
    pub modes: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            population: 64,
            elites: 8,
            iterations: 15,
            fd_passes: 20,
            fd_step: 1e-3,
            seed: 0,
            intervals: 4,
            modes: 8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.elites == 0 || self.elites > self.population {
            return Err(ChnsError::InvalidParameter(format!(
                "need 1 <= elites ({}) <= population ({})",
                self.elites, self.population
            )));
        }
        if self.intervals == 0 || self.modes == 0 {
            return Err(ChnsError::InvalidParameter("intervals and modes must be >= 1".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(ChnsError::InvalidParameter("fd_step must be > 0".into()));
        }
        Ok(())
    }
}

/// Upper estimate of the value function at one initial condition.
#[derive(Clone, Debug)]
pub struct ValueEstimate {
    pub value: f64,
    pub best_control: ControlSignal,
    pub best_modes: ModalControl,
    pub evals: usize,
    pub seed: u64,
    pub window: (f64, f64),
    /// Best value after each optimizer iteration and descent pass.
    pub history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowJson {
    pub tau: f64,
    #[serde(rename = "T")]
    pub end: f64,
}

/// On-disk form of a [`ValueEstimate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueEstimateJson {
    pub value: f64,
    pub evals: usize,
    pub seed: u64,
    pub window: WindowJson,
    pub control: ModalControl,
}

impl ValueEstimate {
    pub fn to_json(&self) -> ValueEstimateJson {
        ValueEstimateJson {
            value: self.value,
            evals: self.evals,
            seed: self.seed,
            window: WindowJson {
                tau: self.window.0,
                end: self.window.1,
            },
            control: self.best_modes.clone(),
        }
    }
}

struct Search<'a> {
    s0: &'a State,
    basis: SolenoidalBasis,
    breakpoints: Vec<f64>,
    p: &'a Params,
    c: &'a SchemeConfig,
    opt: &'a OptimizerConfig,
    evals: usize,
}

impl Search<'_> {
    fn modal(&self, x: &[f64]) -> ModalControl {
        ModalControl {
            breakpoints: self.breakpoints.clone(),
            modes: x.chunks(self.opt.modes).map(|c| c.to_vec()).collect(),
        }
    }

    fn project(&self, x: &mut [f64]) {
        for chunk in x.chunks_mut(self.opt.modes) {
            project_coeffs(chunk, self.p.r);
        }
    }

    /// Costs of a batch of candidates, evaluated in parallel, in input order.
    /// Candidates that blow up score +∞.
    fn costs(&mut self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.evals += xs.len();
        xs.par_iter()
            .map(|x| {
                let signal = self.modal(x).to_signal(&self.basis)?;
                match evaluate_cost(self.s0, &signal, self.p, self.c) {
                    Ok(cost) => Ok(cost.total),
                    Err(ChnsError::BlowUp { .. }) => Ok(f64::INFINITY),
                    Err(e) => Err(e),
                }
            })
            .collect()
    }
}

/// Searches piecewise-constant controls for the smallest cost from `s0` over
/// `window`.
///
/// A cross-entropy search over per-interval stream-function coefficients
/// (each interval projected to the R-ball) is followed by projected gradient
/// descent on central finite differences. The zero control is the first candidate, so
/// the result never exceeds the uncontrolled cost.
pub fn value_estimate(
    s0: &State,
    window: (f64, f64),
    p: &Params,
    c: &SchemeConfig,
    opt: &OptimizerConfig,
) -> Result<ValueEstimate> {
    p.validate()?;
    c.validate()?;
    opt.validate()?;
    let (tau, end) = window;
    if !(end > tau) {
        return Err(ChnsError::DegenerateWindow { tau, end });
    }
    let start = State { t: tau, ..s0.clone() };
    let grid: GridSpec = *s0.grid();
    let basis = SolenoidalBasis::new(grid, opt.modes);
    let dim = opt.intervals * opt.modes;
    let template = ModalControl::zeros(tau, end, opt.intervals, opt.modes);
    let mut search = Search {
        s0: &start,
        basis,
        breakpoints: template.breakpoints,
        p,
        c,
        opt,
        evals: 0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut best_x = vec![0.0; dim];
    let mut best = search.costs(std::slice::from_ref(&best_x))?[0];
    if !best.is_finite() {
        return Err(ChnsError::BlowUp {
            t: end,
            what: "uncontrolled cost",
            value: best,
        });
    }
    let mut history = Vec::new();

    if p.r > 0.0 {
        let mut mean = vec![0.0; dim];
        let mut sd = vec![p.r / (opt.modes as f64).sqrt(); dim];
        let floor = 1e-6 * p.r;
        for _ in 0..opt.iterations {
            // mean first; the opening generation's mean is the zero control
            let mut pop = vec![mean.clone()];
            while pop.len() < opt.population {
                let mut x: Vec<f64> = (0..dim)
                    .map(|i| mean[i] + sd[i] * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                search.project(&mut x);
                pop.push(x);
            }
            let costs = search.costs(&pop)?;
            let mut order: Vec<usize> = (0..pop.len()).collect();
            order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
            if costs[order[0]] < best {
                best = costs[order[0]];
                best_x = pop[order[0]].clone();
            }
            let elites = &order[..opt.elites];
            for i in 0..dim {
                let m = elites.iter().map(|&e| pop[e][i]).sum::<f64>() / elites.len() as f64;
                let v = elites.iter().map(|&e| (pop[e][i] - m).powi(2)).sum::<f64>() / elites.len() as f64;
                mean[i] = m;
                sd[i] = v.sqrt().max(floor);
            }
            search.project(&mut mean);
            history.push(best);
        }

        // projected gradient descent on central differences, backtracking
        let mut alpha = 1.0;
        for _ in 0..opt.fd_passes {
            let probes: Vec<Vec<f64>> = (0..2 * dim)
                .map(|k| {
                    let mut x = best_x.clone();
                    x[k / 2] += if k % 2 == 0 { opt.fd_step } else { -opt.fd_step };
                    x
                })
                .collect();
            let pc = search.costs(&probes)?;
            let grad: Vec<f64> = (0..dim).map(|i| (pc[2 * i] - pc[2 * i + 1]) / (2.0 * opt.fd_step)).collect();
            if !grad.iter().all(|g| g.is_finite()) {
                break;
            }
            let mut trial_alpha = 2.0 * alpha;
            let mut accepted = false;
            for _ in 0..20 {
                let mut x: Vec<f64> = best_x.iter().zip(&grad).map(|(x, g)| x - trial_alpha * g).collect();
                search.project(&mut x);
                let cost = search.costs(std::slice::from_ref(&x))?[0];
                if cost < best {
                    best = cost;
                    best_x = x;
                    alpha = trial_alpha;
                    accepted = true;
                    break;
                }
                trial_alpha *= 0.25;
            }
            history.push(best);
            if !accepted {
                break;
            }
        }
    } else {
        history.push(best);
    }

    let best_modes = search.modal(&best_x);
    let best_control = best_modes.to_signal(&search.basis)?;
    Ok(ValueEstimate {
        value: best,
        best_control,
        best_modes,
        evals: search.evals,
        seed: opt.seed,
        window,
        history,
    })
}

/// One first-leg candidate of the dynamic-programming check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DppCandidate {
    pub label: String,
    /// Running cost of the first leg on `[τ, t_mid]`.
    pub first_leg: f64,
    /// Estimated value at `(t_mid, reached state)`.
    pub value_mid: f64,
    /// `first_leg + value_mid`.
    pub two_leg: f64,
    /// Cost of the concatenated control evaluated over the whole window.
    pub concatenation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DppReport {
    pub tau: f64,
    pub t_mid: f64,
    #[serde(rename = "T")]
    pub end: f64,
    /// Optimizer output at τ.
    pub value_opt: f64,
    /// Best admissible cost known at τ: `min(value_opt, concatenations)`.
    pub value_tau: f64,
    pub best_two_leg: f64,
    pub best_concatenation: f64,
    /// `|value_tau − best_two_leg|`.
    pub residual: f64,
    /// `max(0, value_tau − best_concatenation)`.
    pub slack: f64,
    /// `max(0, value_opt − best_concatenation)`: how far the single-window
    /// search is from the best concatenation.
    pub raw_slack: f64,
    /// Largest `|concatenation − two_leg|` over the candidates.
    pub additivity_gap: f64,
    pub candidates: Vec<DppCandidate>,
}

impl DppReport {
    /// Slack within `slack_tol` and residual within `rel_tol · value_tau`.
    pub fn passes(&self, slack_tol: f64, rel_tol: f64) -> bool {
        self.slack <= slack_tol && self.residual <= rel_tol * self.value_tau.abs() + slack_tol
    }
}

/// Residual of the dynamic programming principle at the split time `t_mid`.
///
/// The value at τ is estimated once; each candidate first leg (the restriction
/// of the optimizer's best control, and the zero control) is simulated to
/// `t_mid`, the value there is estimated with the same budget, and the two
/// legs are concatenated and re-evaluated over the whole window.
pub fn dpp_residual(
    s0: &State,
    t_mid: f64,
    window: (f64, f64),
    p: &Params,
    c: &SchemeConfig,
    opt: &OptimizerConfig,
) -> Result<DppReport> {
    let (tau, end) = window;
    if !(end > tau) || !(t_mid >= tau && t_mid <= end) {
        return Err(ChnsError::DegenerateWindow { tau: t_mid, end });
    }
    let start = State { t: tau, ..s0.clone() };
    let full = value_estimate(&start, window, p, c, opt)?;
    let grid = *s0.grid();

    let mut candidates = Vec::new();
    if t_mid == tau {
        // empty first leg: the second leg is the whole problem
        candidates.push(DppCandidate {
            label: "empty".into(),
            first_leg: 0.0,
            value_mid: full.value,
            two_leg: full.value,
            concatenation: full.value,
        });
    } else {
        let legs = [
            ("optimizer", full.best_control.restrict(tau, t_mid)?),
            ("zero", ControlSignal::zero(grid, tau, t_mid)),
        ];
        for (label, leg) in legs {
            let (cost, reached) = evaluate_cost_with_state(&start, &leg, p, c)?;
            let (value_mid, second) = if t_mid == end {
                // V(T, x) is the terminal cost
                (cost.terminal, None)
            } else {
                let v = value_estimate(&reached, (t_mid, end), p, c, opt)?;
                (v.value, Some(v.best_control))
            };
            let concatenation = match second {
                Some(sec) => evaluate_cost(&start, &leg.concat(&sec)?, p, c)?.total,
                None => cost.total,
            };
            candidates.push(DppCandidate {
                label: label.into(),
                first_leg: cost.running(),
                value_mid,
                two_leg: cost.running() + value_mid,
                concatenation,
            });
        }
    }

    let best_two_leg = candidates.iter().map(|c| c.two_leg).fold(f64::INFINITY, f64::min);
    let best_concatenation = candidates.iter().map(|c| c.concatenation).fold(f64::INFINITY, f64::min);
    let additivity_gap = candidates
        .iter()
        .map(|c| (c.concatenation - c.two_leg).abs())
        .fold(0.0, f64::max);
    let value_tau = full.value.min(best_concatenation);
    Ok(DppReport {
        tau,
        t_mid,
        end,
        value_opt: full.value,
        value_tau,
        best_two_leg,
        best_concatenation,
        residual: (value_tau - best_two_leg).abs(),
        slack: (value_tau - best_concatenation).max(0.0),
        raw_slack: (full.value - best_concatenation).max(0.0),
        additivity_gap,
        candidates,
    })
}
