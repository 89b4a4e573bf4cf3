//! Two qubits under continuous half-parity measurement: Bayesian quantum
//! trajectories, concurrence statistics, and most-likely paths.

pub mod bayes;
pub mod cli;
pub mod config;
pub mod concurrence;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod mlp;
pub mod model;
pub mod ode;
pub mod quad;
pub mod readout;
pub mod verify;

pub use error::{Error, Result};
pub use model::{Basis, MeasConfig, Preset, XState};
