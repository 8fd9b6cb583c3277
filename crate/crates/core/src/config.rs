//! JSON run configuration for the command-line driver.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{ControlSignal, ModalControl, OptimizerConfig, SolenoidalBasis};
use crate::error::{ChnsError, Result};
use crate::grid::GridSpec;
use crate::integrator::{SchemeConfig, State};
use crate::io::read_snapshot;
use crate::operators::Params;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub params: Params,
    pub time: TimeConfig,
    pub scheme: SchemeOptions,
    pub init: InitConfig,
    pub control: ControlConfig,
    pub optimizer: OptimizerConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(rename = "L")]
    pub length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            nx: 64,
            ny: 64,
            length: 2.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Write a snapshot every this many steps; 0 writes only the endpoints.
    pub snapshot_every: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            dt: 1e-3,
            t_start: 0.0,
            t_end: 1.0,
            snapshot_every: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeOptions {
    pub stabilization: f64,
    pub dealias: bool,
    pub blowup_cap: f64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        let d = SchemeConfig::default();
        SchemeOptions {
            stabilization: d.stabilization,
            dealias: d.dealias,
            blowup_cap: d.blowup_cap,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    #[default]
    Rest,
    Spinodal,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub kind: InitKind,
    /// RMS of the spinodal perturbation.
    pub amplitude: f64,
    /// Largest wavenumber index in the spinodal perturbation.
    pub cutoff: f64,
    pub seed: u64,
    pub path: Option<PathBuf>,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            kind: InitKind::Rest,
            amplitude: 0.01,
            cutoff: 4.0,
            seed: 0,
            path: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlKind {
    #[default]
    Zero,
    File,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub kind: ControlKind,
    /// JSON holding `{breakpoints, modes}`, or a value estimate with a `control` key.
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

fn schema(msg: impl std::fmt::Display) -> ChnsError {
    ChnsError::Config(format!("schema violation: {msg}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(schema)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ChnsError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_spec()?;
        self.params.validate().map_err(schema)?;
        let t = &self.time;
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            return Err(schema(format!("time.dt must be > 0, got {}", t.dt)));
        }
        if !(t.t_start.is_finite() && t.t_end > t.t_start && t.t_end.is_finite()) {
            return Err(schema(format!(
                "time.t_end ({}) must exceed time.t_start ({})",
                t.t_end, t.t_start
            )));
        }
        self.scheme().validate().map_err(schema)?;
        self.optimizer.validate().map_err(schema)?;
        if self.init.kind == InitKind::Spinodal && !(self.init.amplitude >= 0.0 && self.init.cutoff >= 1.0) {
            return Err(schema("init.amplitude must be >= 0 and init.cutoff >= 1"));
        }
        if self.init.kind == InitKind::File && self.init.path.is_none() {
            return Err(schema("init.kind = file needs init.path"));
        }
        if self.control.kind == ControlKind::File && self.control.path.is_none() {
            return Err(schema("control.kind = file needs control.path"));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.nx, self.grid.ny, self.grid.length).map_err(schema)
    }

    pub fn scheme(&self) -> SchemeConfig {
        SchemeConfig {
            dt: self.time.dt,
            stabilization: self.scheme.stabilization,
            dealias: self.scheme.dealias,
            snapshot_every: self.time.snapshot_every,
            blowup_cap: self.scheme.blowup_cap,
        }
    }

    pub fn window(&self) -> (f64, f64) {
        (self.time.t_start, self.time.t_end)
    }

    /// Replaces the initial-data and optimizer seeds.
    pub fn override_seed(&mut self, seed: u64) {
        self.init.seed = seed;
        self.optimizer.seed = seed;
    }

    /// Initial state; relative paths resolve against `base`.
    pub fn initial_state(&self, base: &Path) -> Result<State> {
        let g = self.grid_spec()?;
        let t0 = self.time.t_start;
        match self.init.kind {
            InitKind::Rest => Ok(State::rest(g, t0)),
            InitKind::Spinodal => State::spinodal(g, t0, self.init.amplitude, self.init.cutoff, self.init.seed),
            InitKind::File => {
                let s = read_snapshot(&base.join(self.init.path.as_ref().unwrap()))?;
                if *s.grid() != g {
                    return Err(ChnsError::Config(format!(
                        "snapshot grid {:?} does not match config grid {:?}",
                        s.grid(),
                        g
                    )));
                }
                Ok(State { t: t0, ..s })
            }
        }
    }

    /// Control signal on the configured window; relative paths resolve against `base`.
    pub fn control_signal(&self, base: &Path) -> Result<ControlSignal> {
        let g = self.grid_spec()?;
        let (a, b) = self.window();
        match self.control.kind {
            ControlKind::Zero => Ok(ControlSignal::zero(g, a, b)),
            ControlKind::File => {
                let text = std::fs::read_to_string(base.join(self.control.path.as_ref().unwrap()))?;
                let mut v: serde_json::Value = serde_json::from_str(&text)?;
                if let Some(c) = v.get_mut("control") {
                    v = c.take();
                }
                let m: ModalControl = serde_json::from_value(v).map_err(schema)?;
                let dim = m.modes.first().map_or(0, |r| r.len());
                let s = m.to_signal(&SolenoidalBasis::new(g, dim))?;
                if s.window() != (a, b) {
                    return Err(ChnsError::Config(format!(
                        "control window {:?} does not match time window {:?}",
                        s.window(),
                        (a, b)
                    )));
                }
                s.check_ball(self.params.r)?;
                Ok(s)
            }
        }
    }
}
