//! Command-line driver: `chns <command> --config run.json`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 check or audit failed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::audits::{
    audit_continuous_dependence, audit_energy_law, audit_functional_inequalities, audit_mass,
    audit_self_convergence, audit_time_continuity, audit_value_continuity, perturbation_pairs, AuditReport,
    EnergyLawTolerance,
};
use crate::config::RunConfig;
use crate::control::{dpp_residual, hamiltonian_bruteforce, value_estimate};
use crate::error::ChnsError;
use crate::grid::random_solenoidal;
use crate::integrator::simulate;
use crate::io::{diagnostics_csv, encode_snapshot, write_atomic};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

/// Relative tolerance on the DPP residual.
pub const DPP_RESIDUAL_TOL: f64 = 0.05;
/// Tolerance on the one-sided DPP slack.
pub const DPP_SLACK_TOL: f64 = 1e-9;
/// Ratios `‖p‖/R` swept by `hjb-check`.
pub const HJB_RATIOS: [f64; 4] = [0.0, 0.5, 1.0, 2.0];
pub const HJB_SAMPLES: usize = 10_000;
pub const HJB_TOL: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "chns", version, about = "Controlled Cahn-Hilliard-Navier-Stokes runs and checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for initial data and optimizer (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the system; writes diagnostics.csv and CHNS1 snapshots.
    Simulate(Common),
    /// Estimate the value function at the initial state; writes value.json.
    Optimize(Common),
    /// Dynamic-programming residual at a split time; writes dpp.json.
    DppCheck {
        #[command(flatten)]
        common: Common,
        /// Split time (default: middle of the window).
        #[arg(long)]
        t_mid: Option<f64>,
    },
    /// Closed-form Hamiltonian against brute force; writes hjb.json.
    HjbCheck(Common),
    /// Run one audit; writes audit-<name>.json.
    Audit {
        name: AuditName,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditName {
    Mass,
    Energy,
    ContinuousDependence,
    TimeContinuity,
    ValueContinuity,
    FunctionalInequalities,
    SelfConvergence,
}

impl AuditName {
    fn as_str(self) -> &'static str {
        match self {
            AuditName::Mass => "mass",
            AuditName::Energy => "energy",
            AuditName::ContinuousDependence => "continuous-dependence",
            AuditName::TimeContinuity => "time-continuity",
            AuditName::ValueContinuity => "value-continuity",
            AuditName::FunctionalInequalities => "functional-inequalities",
            AuditName::SelfConvergence => "self-convergence",
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numeric(String),
}

impl From<ChnsError> for Failure {
    fn from(e: ChnsError) -> Self {
        match e {
            ChnsError::BlowUp { .. } | ChnsError::NonFinite => Failure::Numeric(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

/// Everything a command needs, resolved from flags and the config file.
struct Run {
    command: &'static str,
    config: RunConfig,
    config_hash: String,
    base: PathBuf,
    out: PathBuf,
    outputs: Vec<(String, String)>,
}

impl Run {
    fn new(command: &'static str, common: &Common) -> Result<Self, Failure> {
        let bytes = std::fs::read(&common.config)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", common.config.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| Failure::Config("config is not UTF-8".into()))?;
        let mut config = RunConfig::from_json(&text)?;
        if let Some(seed) = common.seed {
            config.override_seed(seed);
        }
        let base = common
            .config
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let out = match &common.out {
            Some(o) => o.clone(),
            None => base.join(&config.output.dir),
        };
        std::fs::create_dir_all(&out)
            .map_err(|e| Failure::Config(format!("cannot create {}: {e}", out.display())))?;
        Ok(Run {
            command,
            config,
            config_hash: format!("{:x}", Sha256::digest(&bytes)),
            base,
            out,
            outputs: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        write_atomic(&self.out.join(name), bytes)?;
        self.outputs.push((name.to_string(), format!("{:x}", Sha256::digest(bytes))));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), Failure> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::Numeric(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn finish(mut self, extra: serde_json::Value) -> Result<(), Failure> {
        let outputs: Vec<_> = self
            .outputs
            .iter()
            .map(|(n, h)| json!({ "file": n, "sha256": h }))
            .collect();
        let manifest = json!({
            "tool": "chns",
            "version": env!("CARGO_PKG_VERSION"),
            "snapshot_format": "CHNS1",
            "command": self.command,
            "config_sha256": self.config_hash,
            "seed": self.config.optimizer.seed,
            "init_seed": self.config.init.seed,
            "args": extra,
            "config": self.config,
            "outputs": outputs,
        });
        self.write_json("manifest.json", &manifest)
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Ok(n) = std::env::var("CHNS_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: CHNS_THREADS must be a positive integer, got {n:?}");
                return EXIT_CONFIG;
            }
        }
    }
    run(&cli)
}

pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Optimize(c) => cmd_optimize(c),
        Command::DppCheck { common, t_mid } => cmd_dpp_check(common, *t_mid),
        Command::HjbCheck(c) => cmd_hjb_check(c),
        Command::Audit { name, common } => cmd_audit(common, *name),
    };
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILED,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            EXIT_CONFIG
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("numerical failure: {m}");
            EXIT_NUMERIC
        }
    }
}

fn cmd_simulate(common: &Common) -> Result<bool, Failure> {
    let mut run = Run::new("simulate", common)?;
    let c = &run.config;
    let s0 = c.initial_state(&run.base)?;
    let control = c.control_signal(&run.base)?;
    let tr = simulate(&s0, &control, c.time.t_end, &c.params, &c.scheme())?;
    run.write("diagnostics.csv", diagnostics_csv(&tr.diagnostics).as_bytes())?;
    for (i, s) in tr.states.iter().enumerate() {
        run.write(&format!("snapshot-{i:06}.chns"), &encode_snapshot(s))?;
    }
    let last = tr.diagnostics.last().unwrap();
    eprintln!(
        "simulated to t = {} in {} steps; E_total = {:e}, mean_phi = {:e}",
        last.t,
        tr.diagnostics.len() - 1,
        last.e_total,
        last.mean_phi
    );
    run.finish(json!({}))?;
    Ok(true)
}

fn cmd_optimize(common: &Common) -> Result<bool, Failure> {
    let mut run = Run::new("optimize", common)?;
    let c = &run.config;
    let s0 = c.initial_state(&run.base)?;
    let v = value_estimate(&s0, c.window(), &c.params, &c.scheme(), &c.optimizer)?;
    eprintln!("value estimate {:e} after {} cost evaluations", v.value, v.evals);
    run.write_json("value.json", &v.to_json())?;
    run.finish(json!({}))?;
    Ok(true)
}

fn cmd_dpp_check(common: &Common, t_mid: Option<f64>) -> Result<bool, Failure> {
    let mut run = Run::new("dpp-check", common)?;
    let c = &run.config;
    let (a, b) = c.window();
    let t_mid = t_mid.unwrap_or(0.5 * (a + b));
    let s0 = c.initial_state(&run.base)?;
    let r = dpp_residual(&s0, t_mid, c.window(), &c.params, &c.scheme(), &c.optimizer)?;
    let pass = r.passes(DPP_SLACK_TOL, DPP_RESIDUAL_TOL);
    eprintln!(
        "dpp: V(tau) = {:e}, residual = {:e}, slack = {:e}: {}",
        r.value_tau,
        r.residual,
        r.slack,
        if pass { "pass" } else { "FAIL" }
    );
    run.write_json("dpp.json", &json!({ "pass": pass, "report": r }))?;
    run.finish(json!({ "t_mid": t_mid }))?;
    Ok(pass)
}

fn cmd_hjb_check(common: &Common) -> Result<bool, Failure> {
    let mut run = Run::new("hjb-check", common)?;
    let c = &run.config;
    let g = c.grid_spec()?;
    let r = c.params.r;
    let seed = c.optimizer.seed;
    let cutoff = (g.nx.min(g.ny) / 4) as f64;
    // absolute tolerance, relaxed for balls with ½R² above one
    let tol = HJB_TOL * (0.5 * r * r).max(1.0);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, ratio) in HJB_RATIOS.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let p = random_solenoidal(g, cutoff, &mut rng);
        let pn = p.l2_norm();
        let p = p.scale(ratio * r / pn);
        let b = hamiltonian_bruteforce(&p, r, HJB_SAMPLES, seed.wrapping_add(100 + i as u64))?;
        let gap = (b.value - b.closed).abs();
        let sampled_gap = (b.sampled_min - b.closed).abs();
        worst = worst.max(gap).max(sampled_gap);
        rows.push(json!({
            "ratio": ratio,
            "p_norm": p.l2_norm(),
            "closed": b.closed,
            "bruteforce": b.value,
            "sampled_min": b.sampled_min,
            "gap": gap,
            "sampled_gap": sampled_gap,
        }));
    }
    let pass = worst <= tol;
    eprintln!("hjb: max gap {worst:e} (tolerance {tol:e}): {}", if pass { "pass" } else { "FAIL" });
    run.write_json(
        "hjb.json",
        &json!({ "R": r, "samples": HJB_SAMPLES, "tolerance": tol, "max_gap": worst, "pass": pass, "rows": rows }),
    )?;
    run.finish(json!({}))?;
    Ok(pass)
}

/// Perturbation sizes for the dependence audits.
pub const AUDIT_DELTAS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];
/// Horizons for the time-continuity audit.
pub const AUDIT_HORIZONS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];
/// Pair distances for the value-continuity audit.
pub const AUDIT_VALUE_DELTAS: [f64; 3] = [0.2, 0.1, 0.05];
/// Step sizes for the self-convergence audit.
pub const AUDIT_DTS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];
pub const AUDIT_INEQUALITY_SAMPLES: usize = 100;

fn cmd_audit(common: &Common, name: AuditName) -> Result<bool, Failure> {
    let mut run = Run::new("audit", common)?;
    let report = run_audit(&run.config, &run.base, name)?;
    eprintln!(
        "audit {}: {} (fitted constant {:e})",
        report.name,
        if report.pass { "pass" } else { "FAIL" },
        report.fitted_constant
    );
    run.write_json(&format!("audit-{}.json", name.as_str()), &report)?;
    run.finish(json!({ "audit": name }))?;
    Ok(report.pass)
}

pub fn run_audit(c: &RunConfig, base: &Path, name: AuditName) -> crate::Result<AuditReport> {
    let s0 = c.initial_state(base)?;
    let p = &c.params;
    let sc = c.scheme();
    let t_end = c.time.t_end;
    match name {
        AuditName::Mass => audit_mass(&s0, &c.control_signal(base)?, t_end, p, &sc, 1e-12),
        AuditName::Energy => audit_energy_law(&s0, p, &sc, t_end, EnergyLawTolerance::default()),
        AuditName::ContinuousDependence => audit_continuous_dependence(&s0, &AUDIT_DELTAS, t_end, p, &sc, c.init.seed),
        AuditName::TimeContinuity => audit_time_continuity(&s0, &AUDIT_HORIZONS, p, &sc),
        AuditName::ValueContinuity => {
            let pairs = perturbation_pairs(&s0, &AUDIT_VALUE_DELTAS, c.init.seed)?;
            audit_value_continuity(&pairs, c.window(), p, &sc, &c.optimizer)
        }
        AuditName::FunctionalInequalities => {
            audit_functional_inequalities(AUDIT_INEQUALITY_SAMPLES, c.grid_spec()?, c.init.seed)
        }
        AuditName::SelfConvergence => audit_self_convergence(&s0, &AUDIT_DTS, t_end, p, &sc, 0.9),
    }
}
