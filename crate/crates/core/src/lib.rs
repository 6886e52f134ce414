//! Simulation and analytic toolkit for a partitioned video-on-demand server
//! under multirate Poisson request traffic, with optional probabilistic
//! per-class admission control.
//!
//! - [`analytic`]: Erlang-B, overflow-chain blocking, selection and gate
//!   probabilities, Erlang-k density.
//! - [`traffic`]: cluster workload and seeded arrival streams.
//! - [`engine`]: event-driven loss simulation with admission strategies.
//! - [`metrics`]: counters, blocking estimates, CSV.
//! - [`cli`]: scenario files, sweeps, analytic comparison.

pub mod analytic;
pub mod cli;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod traffic;

pub use error::{Error, Result};
