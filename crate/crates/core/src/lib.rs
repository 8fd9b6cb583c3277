//! Controlled Cahn-Hilliard-Navier-Stokes system on a periodic box.
//!
//! Pseudo-spectral discretization, a semi-implicit time stepper, cost and
//! value-function estimates for bounded solenoidal controls, and numerical
//! audits of the estimates the model satisfies.

pub mod audits;
pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod operators;

pub use error::{ChnsError, Result};
pub use grid::{GridSpec, ScalarField, SpectralCoeffs, VelocityField};
pub use integrator::{simulate, simulate_with, step, Diagnostics, SchemeConfig, State, Trajectory};
pub use operators::{Params, PotentialSpec};
