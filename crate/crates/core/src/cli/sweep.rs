//! Sweep orchestration and the single-partition analytic check.

use std::fmt;

use crate::analytic::{erlang_b, OfferedLoad, PartitionSpec};
use crate::engine::{self, StrategySpec};
use crate::error::{Error, Result};
use crate::metrics::{self, BlockingScope, Estimate, RunMetrics, SweepPoint};
use crate::traffic::{build_clusters, WorkloadSpec};

use super::config::{ScenarioConfig, SweepMode};

/// Seed of one replication at one sweep point.
pub fn replication_seed(base: u64, point_index: usize, replication_index: usize) -> u64 {
    base.wrapping_add((point_index as u64).wrapping_mul(10007))
        .wrapping_add(replication_index as u64)
}

fn replicate(
    config: &ScenarioConfig,
    workload: &WorkloadSpec,
    strategy: &StrategySpec,
    point_index: usize,
) -> Result<Vec<RunMetrics>> {
    let capacities = config.capacities();
    (0..config.replications)
        .map(|r| {
            engine::run(
                workload,
                &capacities,
                strategy,
                config.horizon,
                config.warmup,
                replication_seed(config.seed, point_index, r),
            )
        })
        .collect()
}

/// Runs every sweep point for every configured strategy.
///
/// In global mode point `c` multiplies all cluster rates by
/// `r_c / min_rate`; in per-cluster mode a single load level is simulated
/// and point `c` reports cluster `c` alone. Both strategies at a point use
/// the same replication seeds.
pub fn run_sweep(config: &ScenarioConfig) -> Result<Vec<SweepPoint>> {
    let base = config.workload()?;
    let strategies = config.strategies()?;
    let rates: Vec<f64> = build_clusters(config.num_clusters, config.min_rate, config.max_rate)?
        .iter()
        .map(|c| c.traffic_rate)
        .collect();
    let mut points = Vec::with_capacity(rates.len() * strategies.len());

    match config.sweep_mode {
        SweepMode::Global => {
            if config.min_rate <= 0.0 {
                return Err(Error::config(
                    "global sweep needs min_rate > 0 to scale load",
                ));
            }
            for (index, &rate) in rates.iter().enumerate() {
                let workload = base.scaled(rate / config.min_rate)?;
                for strategy in &strategies {
                    let reps = replicate(config, &workload, strategy, index)?;
                    points.push(SweepPoint::new(
                        rate,
                        workload.offered_erlangs(),
                        strategy.name(),
                        reps,
                    )?);
                }
            }
        }
        SweepMode::PerCluster => {
            for strategy in &strategies {
                let reps = replicate(config, &base, strategy, 0)?;
                for (class_id, cluster) in base.clusters.iter().enumerate() {
                    let class_reps = reps
                        .iter()
                        .map(|m| m.class_only(class_id))
                        .collect::<Result<Vec<_>>>()?;
                    points.push(SweepPoint::new(
                        cluster.traffic_rate,
                        cluster.offered_erlangs(),
                        strategy.name(),
                        class_reps,
                    )?);
                }
            }
        }
    }
    Ok(points)
}

/// The base-load scenario (first sweep point) for every configured strategy.
pub fn run_base(config: &ScenarioConfig) -> Result<Vec<SweepPoint>> {
    let workload = config.workload()?;
    config
        .strategies()?
        .iter()
        .map(|strategy| {
            let reps = replicate(config, &workload, strategy, 0)?;
            SweepPoint::new(
                config.min_rate,
                workload.offered_erlangs(),
                strategy.name(),
                reps,
            )
        })
        .collect()
}

/// Simulated versus Erlang-B blocking for a single partition.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticComparison {
    pub offered_erlangs: f64,
    pub capacity: u32,
    /// Mean server blocking over replications; `None` if nothing was offered.
    pub simulated: Option<Estimate>,
    pub analytic: f64,
    pub tolerance: f64,
    pub offered_requests: u64,
    pub blocked_requests: u64,
}

impl AnalyticComparison {
    pub fn abs_difference(&self) -> Option<f64> {
        self.simulated.map(|s| (s.mean - self.analytic).abs())
    }

    /// With no offered requests the check passes only if the analytic
    /// value is also zero.
    pub fn passed(&self) -> bool {
        match self.abs_difference() {
            Some(d) => d <= self.tolerance,
            None => self.blocked_requests == 0 && self.analytic == 0.0,
        }
    }
}

impl fmt::Display for AnalyticComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "offered load      {} Erlang on {} ports",
            metrics::format_number(self.offered_erlangs),
            self.capacity
        )?;
        writeln!(
            f,
            "erlang-b          {}",
            metrics::format_number(self.analytic)
        )?;
        match self.simulated {
            Some(s) => {
                writeln!(
                    f,
                    "simulated         {} +/- {} ({} replications)",
                    metrics::format_number(s.mean),
                    metrics::format_number(s.ci95_halfwidth),
                    s.samples
                )?;
                writeln!(
                    f,
                    "abs difference    {}",
                    metrics::format_number((s.mean - self.analytic).abs())
                )?;
            }
            None => writeln!(f, "simulated         n/a (no requests offered)")?,
        }
        write!(
            f,
            "tolerance         {} -> {}",
            metrics::format_number(self.tolerance),
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Runs the uncontrolled strategy on a one-partition scenario over
/// `compare_horizon` (warmup 10%) and compares with Erlang-B.
pub fn compare_analytic(config: &ScenarioConfig, tolerance: f64) -> Result<AnalyticComparison> {
    if config.num_partitions != 1 {
        return Err(Error::arg(format!(
            "analytic comparison needs exactly one partition, config has {}",
            config.num_partitions
        )));
    }
    if !tolerance.is_finite() || tolerance < 0.0 {
        return Err(Error::arg(format!(
            "tolerance must be non-negative, got {tolerance}"
        )));
    }
    let workload = config.workload()?;
    let capacity = config.capacities()[0];
    let horizon = config.compare_horizon;
    let warmup = horizon / 10.0;
    let strategy = StrategySpec::uncontrolled();
    let reps = (0..config.replications)
        .map(|r| {
            engine::run(
                &workload,
                &[capacity],
                &strategy,
                horizon,
                warmup,
                replication_seed(config.seed, 0, r),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let simulated = match metrics::aggregate(&reps, BlockingScope::Server) {
        Ok(e) => Some(e),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    let offered_erlangs = workload.offered_erlangs();
    let analytic = erlang_b(
        OfferedLoad::new(offered_erlangs)?,
        PartitionSpec::new(capacity),
    )?;
    Ok(AnalyticComparison {
        offered_erlangs,
        capacity,
        simulated,
        analytic,
        tolerance,
        offered_requests: reps.iter().map(|m| m.offered).sum(),
        blocked_requests: reps.iter().map(|m| m.blocked).sum(),
    })
}

/// Human-readable sweep table with threshold annotations.
pub fn summary(points: &[SweepPoint], threshold: f64) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>10} {:>14} {:>13} {:>22} {:>12} {:>8}",
        "rate_mbps", "erlangs", "strategy", "server_blocking", "total_denial", "thresh"
    );
    let mut order: Vec<&SweepPoint> = points.iter().collect();
    order.sort_by(|a, b| {
        a.traffic_rate
            .total_cmp(&b.traffic_rate)
            .then_with(|| a.strategy.cmp(&b.strategy))
    });
    for p in order {
        let server = p
            .server
            .map(|e| format!("{:.6} +/- {:.6}", e.mean, e.ci95_halfwidth))
            .unwrap_or_else(|| "n/a".into());
        let total = p
            .total_denial
            .map(|e| format!("{:.6}", e.mean))
            .unwrap_or_else(|| "n/a".into());
        let verdict = match p.mean_blocking() {
            Some(b) if b <= threshold => "below",
            Some(_) => "above",
            None => "-",
        };
        let _ = writeln!(
            out,
            "{:>10} {:>14.3} {:>13} {:>22} {:>12} {:>8}",
            metrics::format_number(p.traffic_rate),
            p.offered_erlangs,
            p.strategy,
            server,
            total,
            verdict
        );
    }
    out
}
