//! Cyber-physical power-system simulation and Volt-Var response engine.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`]: network data model, case files and AC power flow.
//! - [`rid`]: sensitivity matrices and controller role discovery.
//! - [`cyber`]: discrete-event SCADA channel simulation with DoS injection.
//! - [`fusion`]: fused telemetry, PCA, t-SNE, clustering and detection scores.
//! - [`env`]: the hourly Volt-Var MDP environment.
//! - [`rl`]: policy networks, PPO and A2C.
//! - [`responder`]: state assessment and recommendation pipeline.
//! - [`config`]: run configuration.

pub mod config;
pub mod cyber;
pub mod env;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod grid;
pub mod rid;
pub mod responder;
pub mod rl;

pub use error::{Error, Result};
