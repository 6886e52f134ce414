//! `key = value` scenario files.
//!
//! ```text
//! # prose variant of the default scenario
//! max_rate = 5.0
//! max_hold = 30
//! ```
//!
//! Every key is optional; missing keys take the default scenario values.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::analytic::PolicyWeights;
use crate::engine::{StrategySpec, WeightScaling};
use crate::error::{Error, Result};
use crate::traffic::{WorkloadParams, WorkloadSpec};

/// Which strategies a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategySelection {
    Uncontrolled,
    Policy,
    Both,
}

impl FromStr for StrategySelection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uncontrolled" => Ok(Self::Uncontrolled),
            "policy" => Ok(Self::Policy),
            "both" => Ok(Self::Both),
            _ => Err(format!("expected uncontrolled, policy or both, got {s:?}")),
        }
    }
}

/// Where policy weights come from when none are listed explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyPreset {
    /// `1 / num_clusters` per class.
    Uniform,
    /// Proportional to the capacity of each class's home partition.
    CapacityProportional,
}

impl FromStr for PolicyPreset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "capacity_proportional" => Ok(Self::CapacityProportional),
            _ => Err(format!(
                "expected uniform or capacity_proportional, got {s:?}"
            )),
        }
    }
}

fn parse_scaling(s: &str) -> std::result::Result<WeightScaling, String> {
    match s {
        "literal" => Ok(WeightScaling::Literal),
        "max_normalized" => Ok(WeightScaling::MaxNormalized),
        _ => Err(format!("expected literal or max_normalized, got {s:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Each sweep point scales every cluster's rate by `r_c / min_rate`.
    Global,
    /// One load level; each point reports one cluster's blocking.
    PerCluster,
}

impl FromStr for SweepMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "global" => Ok(Self::Global),
            "per_cluster" => Ok(Self::PerCluster),
            _ => Err(format!("expected global or per_cluster, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_clusters: usize,
    pub min_rate: f64,
    pub max_rate: f64,
    pub per_stream_bandwidth: f64,
    pub interactive_rate: f64,
    pub num_partitions: usize,
    pub ports_per_partition: u32,
    /// Explicit per-partition ports; overrides `ports_per_partition`.
    pub capacities: Option<Vec<u32>>,
    pub min_hold: f64,
    pub max_hold: f64,
    pub horizon: f64,
    pub warmup: f64,
    pub replications: usize,
    pub seed: u64,
    pub strategy: StrategySelection,
    pub policy_preset: PolicyPreset,
    /// Explicit per-class weights; overrides `policy_preset`.
    pub weights: Option<Vec<f64>>,
    pub weight_scaling: WeightScaling,
    pub threshold: f64,
    pub sweep_mode: SweepMode,
    /// Horizon used by the analytic comparison.
    pub compare_horizon: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_clusters: 30,
            min_rate: 1.0,
            max_rate: 15.5,
            per_stream_bandwidth: 0.5,
            interactive_rate: 0.0,
            num_partitions: 30,
            ports_per_partition: 10,
            capacities: None,
            min_hold: 1.0,
            max_hold: 200.0,
            horizon: 500.0,
            warmup: 50.0,
            replications: 20,
            seed: 1,
            strategy: StrategySelection::Both,
            policy_preset: PolicyPreset::Uniform,
            weights: None,
            weight_scaling: WeightScaling::Literal,
            threshold: 0.05,
            sweep_mode: SweepMode::Global,
            compare_horizon: 5000.0,
        }
    }
}

impl ScenarioConfig {
    pub fn capacities(&self) -> Vec<u32> {
        self.capacities
            .clone()
            .unwrap_or_else(|| vec![self.ports_per_partition; self.num_partitions])
    }

    pub fn workload(&self) -> Result<WorkloadSpec> {
        WorkloadSpec::build(&WorkloadParams {
            num_clusters: self.num_clusters,
            min_rate: self.min_rate,
            max_rate: self.max_rate,
            per_stream_bandwidth: self.per_stream_bandwidth,
            min_hold: self.min_hold,
            max_hold: self.max_hold,
            interactive_rate: self.interactive_rate,
            seed: self.seed,
        })
    }

    pub fn policy_weights(&self) -> Result<PolicyWeights> {
        if let Some(w) = &self.weights {
            return PolicyWeights::new(w.clone());
        }
        match self.policy_preset {
            PolicyPreset::Uniform => PolicyWeights::uniform(self.num_clusters),
            PolicyPreset::CapacityProportional => {
                let caps = self.capacities();
                let shares: Vec<f64> = (0..self.num_clusters)
                    .map(|c| f64::from(caps[c % caps.len()]))
                    .collect();
                PolicyWeights::proportional(&shares)
            }
        }
    }

    /// The strategies selected by `strategy`, uncontrolled first.
    pub fn strategies(&self) -> Result<Vec<StrategySpec>> {
        let policy = || -> Result<StrategySpec> {
            Ok(StrategySpec::policy(
                self.policy_weights()?,
                self.weight_scaling,
            ))
        };
        Ok(match self.strategy {
            StrategySelection::Uncontrolled => vec![StrategySpec::uncontrolled()],
            StrategySelection::Policy => vec![policy()?],
            StrategySelection::Both => vec![StrategySpec::uncontrolled(), policy()?],
        })
    }
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "clusters {} at {}..{} Mb/s, {} Mb/s per stream",
            self.num_clusters, self.min_rate, self.max_rate, self.per_stream_bandwidth
        )?;
        writeln!(
            f,
            "partitions {} x {} ports, holding {}..{} s",
            self.num_partitions, self.ports_per_partition, self.min_hold, self.max_hold
        )?;
        write!(
            f,
            "horizon {} s (warmup {} s), {} replications, seed {}",
            self.horizon, self.warmup, self.replications, self.seed
        )
    }
}

const KEYS: &[&str] = &[
    "num_clusters",
    "min_rate",
    "max_rate",
    "per_stream_bandwidth",
    "interactive_rate",
    "num_partitions",
    "ports_per_partition",
    "capacities",
    "min_hold",
    "max_hold",
    "horizon",
    "warmup",
    "replications",
    "seed",
    "strategy",
    "policy_preset",
    "weights",
    "weight_scaling",
    "threshold",
    "sweep_mode",
    "compare_horizon",
];

fn value<T: FromStr>(raw: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| format!("cannot parse {raw:?}: {e}"))
}

fn list<T: FromStr>(raw: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    raw.split(',').map(|s| value(s.trim())).collect()
}

/// Parses a scenario file. Unspecified keys keep their defaults; when
/// `warmup` is absent it is 10% of the horizon.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    let mut lines: HashMap<&'static str, usize> = HashMap::new();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| Error::ConfigLine {
            line: line_no,
            message,
        };
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, raw) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
        let key = key.trim();
        let raw = raw.trim();
        let key: &'static str = KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .ok_or_else(|| err(format!("unknown key {key:?}")))?;
        if let Some(first) = lines.insert(key, line_no) {
            return Err(err(format!(
                "duplicate key {key:?} (first set on line {first})"
            )));
        }
        let parsed: std::result::Result<(), String> = (|| {
            match key {
                "num_clusters" => cfg.num_clusters = value(raw)?,
                "min_rate" => cfg.min_rate = value(raw)?,
                "max_rate" => cfg.max_rate = value(raw)?,
                "per_stream_bandwidth" => cfg.per_stream_bandwidth = value(raw)?,
                "interactive_rate" => cfg.interactive_rate = value(raw)?,
                "num_partitions" => cfg.num_partitions = value(raw)?,
                "ports_per_partition" => cfg.ports_per_partition = value(raw)?,
                "capacities" => cfg.capacities = Some(list(raw)?),
                "min_hold" => cfg.min_hold = value(raw)?,
                "max_hold" => cfg.max_hold = value(raw)?,
                "horizon" => cfg.horizon = value(raw)?,
                "warmup" => cfg.warmup = value(raw)?,
                "replications" => cfg.replications = value(raw)?,
                "seed" => cfg.seed = value(raw)?,
                "strategy" => cfg.strategy = value(raw)?,
                "policy_preset" => cfg.policy_preset = value(raw)?,
                "weights" => cfg.weights = Some(list(raw)?),
                "weight_scaling" => cfg.weight_scaling = parse_scaling(raw)?,
                "threshold" => cfg.threshold = value(raw)?,
                "sweep_mode" => cfg.sweep_mode = value(raw)?,
                "compare_horizon" => cfg.compare_horizon = value(raw)?,
                _ => unreachable!("key list and match arms out of sync"),
            }
            Ok(())
        })();
        parsed.map_err(|m| err(format!("{key}: {m}")))?;
    }

    if !lines.contains_key("warmup") {
        cfg.warmup = cfg.horizon / 10.0;
    }
    validate(&cfg, &lines)?;
    Ok(cfg)
}

/// Checks cross-field invariants. Errors name the line of the first listed
/// key that appears in the file.
fn validate(cfg: &ScenarioConfig, lines: &HashMap<&'static str, usize>) -> Result<()> {
    let fail = |keys: &[&str], message: String| -> Error {
        match keys.iter().find_map(|k| lines.get(k)) {
            Some(&line) => Error::ConfigLine { line, message },
            None => Error::config(message),
        }
    };
    let positive = |x: f64| x.is_finite() && x > 0.0;

    if cfg.num_clusters == 0 {
        return Err(fail(
            &["num_clusters"],
            "num_clusters must be at least 1".into(),
        ));
    }
    if !cfg.min_rate.is_finite() || cfg.min_rate < 0.0 {
        return Err(fail(&["min_rate"], "min_rate must be non-negative".into()));
    }
    if !cfg.max_rate.is_finite() || cfg.max_rate < cfg.min_rate {
        return Err(fail(
            &["max_rate", "min_rate"],
            format!(
                "max_rate {} is below min_rate {}",
                cfg.max_rate, cfg.min_rate
            ),
        ));
    }
    if !positive(cfg.per_stream_bandwidth) {
        return Err(fail(
            &["per_stream_bandwidth"],
            "per_stream_bandwidth must be positive".into(),
        ));
    }
    if !cfg.interactive_rate.is_finite() || cfg.interactive_rate < 0.0 {
        return Err(fail(
            &["interactive_rate"],
            "interactive_rate must be non-negative".into(),
        ));
    }
    if cfg.num_partitions == 0 {
        return Err(fail(
            &["num_partitions"],
            "num_partitions must be at least 1".into(),
        ));
    }
    if let Some(caps) = &cfg.capacities {
        if caps.len() != cfg.num_partitions {
            return Err(fail(
                &["capacities", "num_partitions"],
                format!(
                    "{} capacities given for {} partitions",
                    caps.len(),
                    cfg.num_partitions
                ),
            ));
        }
    }
    if !positive(cfg.min_hold) {
        return Err(fail(&["min_hold"], "min_hold must be positive".into()));
    }
    if !positive(cfg.max_hold) {
        return Err(fail(&["max_hold"], "max_hold must be positive".into()));
    }
    if cfg.min_hold > cfg.max_hold {
        return Err(fail(
            &["min_hold", "max_hold"],
            format!(
                "min_hold {} exceeds max_hold {}",
                cfg.min_hold, cfg.max_hold
            ),
        ));
    }
    if !positive(cfg.horizon) {
        return Err(fail(&["horizon"], "horizon must be positive".into()));
    }
    if !cfg.warmup.is_finite() || cfg.warmup < 0.0 || cfg.warmup >= cfg.horizon {
        return Err(fail(
            &["warmup", "horizon"],
            format!(
                "warmup {} must lie in [0, horizon {})",
                cfg.warmup, cfg.horizon
            ),
        ));
    }
    if cfg.replications == 0 {
        return Err(fail(
            &["replications"],
            "replications must be at least 1".into(),
        ));
    }
    if !(cfg.threshold.is_finite() && (0.0..=1.0).contains(&cfg.threshold)) {
        return Err(fail(&["threshold"], "threshold must lie in [0, 1]".into()));
    }
    if !positive(cfg.compare_horizon) {
        return Err(fail(
            &["compare_horizon"],
            "compare_horizon must be positive".into(),
        ));
    }
    if cfg.strategy != StrategySelection::Uncontrolled {
        let weights = cfg
            .policy_weights()
            .map_err(|e| fail(&["weights", "policy_preset", "capacities"], e.to_string()))?;
        if weights.len() != cfg.num_clusters {
            return Err(fail(
                &["weights", "num_clusters"],
                format!(
                    "{} weights given for {} clusters",
                    weights.len(),
                    cfg.num_clusters
                ),
            ));
        }
    }
    Ok(())
}
