//! Scenario configuration, sweeps and the analytic comparison behind the
//! `vodsim` binary.

pub mod config;
pub mod sweep;

pub use config::{parse_config, PolicyPreset, ScenarioConfig, StrategySelection, SweepMode};
pub use sweep::{
    compare_analytic, replication_seed, run_base, run_sweep, summary, AnalyticComparison,
};
