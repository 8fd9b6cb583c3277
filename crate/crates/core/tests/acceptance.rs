//! Acceptance gate: one line per criterion, nonzero exit if any fails.
//!
//! Extra arguments that are not flags select criteria by substring,
//! e.g. `cargo test --test acceptance -- dpp`.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chns_core::audits::{
    audit_continuous_dependence, audit_energy_law, audit_mass, audit_self_convergence, audit_time_continuity,
    audit_value_continuity, perturbation_pairs, EnergyLawTolerance,
};
use chns_core::control::{
    dpp_residual, feedback_sigma, hamiltonian_bruteforce, hamiltonian_closed, hamiltonian_objective, ControlSignal,
    OptimizerConfig,
};
use chns_core::grid::{random_band_limited, random_solenoidal};
use chns_core::operators::{capillary_b2, chemical_potential, convective_b, free_energy, transport_b1};
use chns_core::{GridSpec, Params, PotentialSpec, ScalarField, SchemeConfig, State, VelocityField};
use common::{control_state, quadrature, rel, smooth_state, Trig, TrigVelocity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn grid64() -> GridSpec {
    GridSpec::square(64, 2.0 * PI).unwrap()
}

/// Spinodal data as generated by the library, and literal white noise.
fn spinodal_pair() -> [(&'static str, State); 2] {
    let g = grid64();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise: Vec<f64> = (0..g.len()).map(|_| 0.01 * rng.sample::<f64, _>(StandardNormal)).collect();
    [
        ("band-limited", State::spinodal(g, 0.0, 0.01, 4.0, 1).unwrap()),
        (
            "white-noise",
            State::new(0.0, ScalarField::from_values(g, noise).unwrap(), VelocityField::zeros(g)).unwrap(),
        ),
    ]
}

fn mass_conservation() -> Outcome {
    let p = Params::default();
    let c = SchemeConfig::default();
    let mut out = Vec::new();
    let mut ok = true;
    for (label, s) in spinodal_pair() {
        let t0 = Instant::now();
        let zero = ControlSignal::zero(*s.grid(), 0.0, 1.0);
        let r = audit_mass(&s, &zero, 1.0, &p, &c, 1e-12).map_err(|e| e.to_string())?;
        let dt = t0.elapsed();
        ok &= r.pass && r.samples == 1000 && secs(dt) < 30.0;
        out.push(format!(
            "{label}: {} steps, max drift {:.2e}, {:.1}s",
            r.samples,
            r.fitted_constant,
            secs(dt)
        ));
    }
    check(ok, out.join("; "))
}

fn energy_law() -> Outcome {
    let p = Params::default();
    let tol = EnergyLawTolerance::default();
    let mut out = Vec::new();
    let mut ok = true;
    for (label, s) in spinodal_pair() {
        let r = audit_energy_law(&s, &p, &SchemeConfig::default(), 1.0, tol).map_err(|e| e.to_string())?;
        let v = r.metric("violations").unwrap();
        ok &= v == 0.0;
        out.push(format!(
            "{label} dt=1e-3: {v} steps over slack, max dD/dt {:.2e}",
            r.metric("max_increase_per_dt").unwrap()
        ));
    }
    let (_, s) = &spinodal_pair()[0];
    let r = audit_energy_law(s, &p, &SchemeConfig::with_dt(2.5e-4), 1.0, tol).map_err(|e| e.to_string())?;
    let gap = r.metric("balance_gap").unwrap();
    ok &= r.metric("violations").unwrap() == 0.0 && gap <= 0.05;
    out.push(format!("balance gap at dt=2.5e-4: {:.2}%", 100.0 * gap));
    check(ok, out.join("; "))
}

fn operator_oracles() -> Outcome {
    let t0 = Instant::now();
    let g = GridSpec::square(32, 3.0).unwrap();
    let l = g.length;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    // pairings are compared on the scale ‖a‖‖b‖ of their factors
    let pair_err = |lib: f64, oracle: f64, a: f64, b: f64| (lib - oracle).abs() / (a * b);
    for _ in 0..20 {
        let u = TrigVelocity { psi: Trig::random(&mut rng, l, 4, 12) };
        let v = TrigVelocity { psi: Trig::random(&mut rng, l, 4, 12) };
        let w = TrigVelocity { psi: Trig::random(&mut rng, l, 4, 12) };
        let phi = Trig::random(&mut rng, l, 4, 12);
        let mu = Trig::random(&mut rng, l, 4, 12);
        let (us, vs, ws) = (u.sample(g), v.sample(g), w.sample(g));
        let (phis, mus) = (phi.sample(g), mu.sample(g));

        let b = convective_b(&us, &vs).unwrap();
        let oracle = quadrature(g, |x, y| {
            let (a, c) = u.value(x, y);
            let j = v.jacobian(x, y);
            let (wx, wy) = w.value(x, y);
            (a * j[0][0] + c * j[0][1]) * wx + (a * j[1][0] + c * j[1][1]) * wy
        });
        worst = worst.max(pair_err(b.inner(&ws).unwrap(), oracle, b.l2_norm(), ws.l2_norm()));

        let b1 = transport_b1(&us, &phis).unwrap();
        let oracle = ScalarField::from_fn(g, |x, y| {
            let (a, c) = u.value(x, y);
            let (gx, gy) = phi.grad(x, y);
            a * gx + c * gy
        });
        worst = worst.max(b1.sub(&oracle).unwrap().linf_norm() / oracle.linf_norm());

        let b2 = capillary_b2(&mus, &phis).unwrap();
        let oracle = quadrature(g, |x, y| {
            let (gx, gy) = phi.grad(x, y);
            let (wx, wy) = w.value(x, y);
            mu.value(x, y) * (gx * wx + gy * wy)
        });
        worst = worst.max(pair_err(b2.inner(&ws).unwrap(), oracle, b2.l2_norm(), ws.l2_norm()));

        // skew-symmetry and duality, relative to the sizes of the factors
        worst = worst.max(b.inner(&vs).unwrap().abs() / (b.l2_norm() * vs.l2_norm()));
        worst = worst.max(b1.inner(&phis).unwrap().abs() / (b1.l2_norm() * phis.l2_norm()));
        let lhs = b2.inner(&us).unwrap();
        let rhs = transport_b1(&us, &phis).unwrap().inner(&mus).unwrap();
        worst = worst.max((lhs - rhs).abs() / (b2.l2_norm() * us.l2_norm()));
    }
    let dt = t0.elapsed();
    check(
        worst <= 1e-9 && secs(dt) < 5.0,
        format!("20 triples, worst relative error {worst:.2e}, {:.2}s", secs(dt)),
    )
}

fn first_variation() -> Outcome {
    let g = GridSpec::square(32, 2.0 * PI).unwrap();
    let pot = PotentialSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let phi = Trig::random(&mut rng, g.length, 3, 6).sample(g);
        let phi = phi.scale(0.8 / phi.linf_norm());
        let psi = random_band_limited(g, 4.0, &mut rng);
        let plus = free_energy(&phi.combine(1.0, &psi, eps).unwrap(), &pot);
        let minus = free_energy(&phi.combine(1.0, &psi, -eps).unwrap(), &pot);
        let fd = (plus - minus) / (2.0 * eps);
        let exact = chemical_potential(&phi, &pot).inner(&psi).unwrap();
        worst = worst.max(rel(fd, exact));
    }
    check(worst <= 1e-6, format!("10 pairs, worst relative error {worst:.2e}"))
}

fn costate(g: GridSpec, norm: f64, seed: u64) -> VelocityField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_solenoidal(g, 4.0, &mut rng);
    let n = p.l2_norm();
    p.scale(norm / n)
}

fn hamiltonian_equivalence() -> Outcome {
    let t0 = Instant::now();
    let g = GridSpec::square(16, 2.0 * PI).unwrap();
    let r = 1.0;
    let mut exact: f64 = 0.0;
    let mut mc: f64 = 0.0;
    for (i, ratio) in [0.0, 0.5, 1.0, 2.0, 10.0].into_iter().enumerate() {
        let p = costate(g, ratio * r, 40 + i as u64);
        let b = hamiltonian_bruteforce(&p, r, 10_000, i as u64).map_err(|e| e.to_string())?;
        let closed = hamiltonian_closed(p.l2_norm(), r).unwrap();
        let at_sigma = hamiltonian_objective(&feedback_sigma(&p, r).unwrap(), &p).unwrap();
        let scale = closed.abs().max(1.0);
        exact = exact.max((b.value - closed).abs() / scale).max((at_sigma - closed).abs() / scale);
        mc = mc.max((b.sampled_min - closed).abs() / closed.abs().max(0.5 * r * r));
    }
    let dt = t0.elapsed();
    check(
        exact <= 1e-12 && mc <= 1e-3 && secs(dt) < 10.0,
        format!("gap with sigma {exact:.1e}, Monte-Carlo {mc:.1e}, {:.2}s", secs(dt)),
    )
}

fn feedback_optimality() -> Outcome {
    let g = GridSpec::square(16, 2.0 * PI).unwrap();
    let r = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pool: Vec<VelocityField> = (0..64)
        .map(|_| {
            let w = random_solenoidal(g, 4.0, &mut rng);
            let n = w.l2_norm();
            w.scale(1.0 / n)
        })
        .collect();
    let mut margin = f64::INFINITY;
    for k in 0..20 {
        let ratio: f64 = rng.gen_range(0.0..3.0);
        let p = costate(g, ratio * r, 200 + k);
        let sigma = feedback_sigma(&p, r).unwrap();
        let best = hamiltonian_objective(&sigma, &p).unwrap();
        let pn = p.l2_norm().max(f64::MIN_POSITIVE);
        let dir = p.scale(-1.0 / pn);
        for _ in 0..10_000 {
            // random direction biased towards -p, random radius in the ball
            let alpha: f64 = rng.gen();
            let w = &pool[rng.gen_range(0..pool.len())];
            let u = dir.combine(alpha, w, 1.0 - alpha).unwrap();
            let un = u.l2_norm();
            let radius = r * rng.gen::<f64>().sqrt();
            let u = u.scale(radius / un);
            margin = margin.min(hamiltonian_objective(&u, &p).unwrap() - best);
        }
    }
    check(margin >= -1e-12, format!("20 costates x 1e4 samples, min margin {margin:.3e}"))
}

fn dpp() -> Outcome {
    let t0 = Instant::now();
    let g = GridSpec::square(16, 2.0 * PI).unwrap();
    let s = control_state(g, 11);
    let r = dpp_residual(
        &s,
        0.1,
        (0.0, 0.2),
        &Params::default(),
        &SchemeConfig::default(),
        &OptimizerConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let dt = t0.elapsed();
    let rel_res = r.residual / r.value_tau;
    check(
        r.slack <= 1e-9 && rel_res <= 0.05 && secs(dt) < 300.0,
        format!(
            "V(tau) = {:.6e}, slack {:.1e}, residual {:.2e} ({:.2e} relative), optimizer-only slack {:.2e}, {:.0}s",
            r.value_tau,
            r.slack,
            r.residual,
            rel_res,
            r.raw_slack,
            secs(dt)
        ),
    )
}

fn continuous_dependence() -> Outcome {
    let g = GridSpec::square(32, 2.0 * PI).unwrap();
    let s = smooth_state(g, 3);
    let r = audit_continuous_dependence(
        &s,
        &[1e-2, 5e-3, 2.5e-3],
        0.2,
        &Params::default(),
        &SchemeConfig::default(),
        4,
    )
    .map_err(|e| e.to_string())?;
    let order = r.fitted_order.unwrap();
    let spread = r.metric("ratio_spread").unwrap();
    check(r.pass, format!("slope vs delta^2 {order:.4}, ratio spread {spread:.3}"))
}

fn time_continuity() -> Outcome {
    let g = GridSpec::square(32, 2.0 * PI).unwrap();
    let s = smooth_state(g, 5);
    let r = audit_time_continuity(&s, &[1e-2, 5e-3, 2.5e-3], &Params::default(), &SchemeConfig::default())
        .map_err(|e| e.to_string())?;
    check(
        r.pass,
        format!(
            "max q(h)/h {:.3e}, spread {:.3}",
            r.fitted_constant,
            r.metric("ratio_spread").unwrap()
        ),
    )
}

fn value_continuity() -> Outcome {
    let g = GridSpec::square(16, 2.0 * PI).unwrap();
    let s = control_state(g, 21);
    let pairs = perturbation_pairs(&s, &[0.2, 0.1, 0.05], 22).map_err(|e| e.to_string())?;
    let r = audit_value_continuity(
        &pairs,
        (0.0, 0.1),
        &Params::default(),
        &SchemeConfig::default(),
        &OptimizerConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let gaps: Vec<f64> = r.details.iter().map(|d| d["gap"].as_f64().unwrap()).collect();
    let shrinking = gaps.windows(2).all(|w| w[1] < w[0]);
    check(
        r.pass && shrinking,
        format!(
            "gaps {:.3e} > {:.3e} > {:.3e}, Spearman {:.2}, modulus {:.3}",
            gaps[0],
            gaps[1],
            gaps[2],
            r.metric("spearman").unwrap(),
            r.fitted_constant
        ),
    )
}

fn self_convergence() -> Outcome {
    let g = GridSpec::square(32, 2.0 * PI).unwrap();
    let s = smooth_state(g, 6);
    let r = audit_self_convergence(
        &s,
        &[1e-3, 5e-4, 2.5e-4],
        0.2,
        &Params::default(),
        &SchemeConfig::default(),
        0.9,
    )
    .map_err(|e| e.to_string())?;
    check(r.pass, format!("order {:.4}", r.fitted_order.unwrap()))
}

fn chns(args: &[&str], cwd: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_chns"))
        .args(args)
        .current_dir(cwd)
        .env("CHNS_THREADS", "1")
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn dir_files(d: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(d)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let config = r#"{
        "grid": {"nx": 16, "ny": 16},
        "params": {"R": 0.5},
        "time": {"dt": 1e-3, "t_end": 0.05, "snapshot_every": 10},
        "init": {"kind": "spinodal", "amplitude": 0.1, "seed": 4},
        "optimizer": {"population": 8, "elites": 2, "iterations": 3, "fd_passes": 1, "seed": 2, "intervals": 2}
    }"#;
    std::fs::write(dir.join("run.json"), config).unwrap();
    let commands: [&[&str]; 6] = [
        &["simulate"],
        &["optimize"],
        &["dpp-check", "--t-mid", "0.02"],
        &["hjb-check"],
        &["audit", "mass"],
        &["audit", "energy"],
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, cmd) in commands.iter().enumerate() {
        let mut codes = Vec::new();
        let mut outs = Vec::new();
        for run in ["a", "b"] {
            let out = format!("out{i}{run}");
            let mut args = cmd.to_vec();
            args.extend(["--config", "run.json", "--out", &out]);
            codes.push(chns(&args, dir));
            outs.push(dir_files(&dir.join(&out)));
        }
        // replay from the manifest's embedded configuration
        let manifest: serde_json::Value =
            serde_json::from_slice(&outs[0].iter().find(|(n, _)| n == "manifest.json").unwrap().1).unwrap();
        std::fs::write(dir.join(format!("replay{i}.json")), manifest["config"].to_string()).unwrap();
        let out = format!("out{i}c");
        let replay_cfg = format!("replay{i}.json");
        let mut args = cmd.to_vec();
        args.extend(["--config", &replay_cfg, "--out", &out]);
        codes.push(chns(&args, dir));
        let replay: Vec<_> = dir_files(&dir.join(&out))
            .into_iter()
            .filter(|(n, _)| n != "manifest.json")
            .collect();
        let first: Vec<_> = outs[0].iter().filter(|(n, _)| n != "manifest.json").cloned().collect();
        let same = outs[0] == outs[1] && replay == first && !first.is_empty();
        let code_ok = codes.iter().all(|&c| c == codes[0]) && codes[0] != 1 && codes[0] != 2;
        ok &= same && code_ok;
        lines.push(format!(
            "{} (exit {}, {} files){}",
            cmd.join(" "),
            codes[0],
            outs[0].len(),
            if same { "" } else { " DIFFERS" }
        ));
    }
    check(ok, format!("byte-identical re-runs: {}", lines.join(", ")))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("mass-conservation", mass_conservation),
        ("energy-law", energy_law),
        ("operator-oracles", operator_oracles),
        ("first-variation", first_variation),
        ("hamiltonian-equivalence", hamiltonian_equivalence),
        ("feedback-optimality", feedback_optimality),
        ("dpp-residual", dpp),
        ("continuous-dependence", continuous_dependence),
        ("time-continuity", time_continuity),
        ("value-continuity", value_continuity),
        ("self-convergence", self_convergence),
        ("cli-reproducibility", reproducibility),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|q| name.contains(q.as_str())) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let el = secs(t0.elapsed());
        match outcome {
            Ok(d) => println!("PASS {:>2} {name} [{el:.1}s]: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{el:.1}s]: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
