//! Run counters, blocking estimates and CSV output.

use std::fmt::Write as _;

use crate::engine::AdmissionOutcome;
use crate::error::{Error, Result};

/// Outcome counts for one request class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ClassCounts {
    pub offered: u64,
    pub admitted: u64,
    pub policed: u64,
    pub blocked: u64,
}

impl ClassCounts {
    #[inline]
    pub fn record(&mut self, outcome: AdmissionOutcome) {
        self.offered += 1;
        match outcome {
            AdmissionOutcome::Admitted(_) => self.admitted += 1,
            AdmissionOutcome::Policed => self.policed += 1,
            AdmissionOutcome::Blocked => self.blocked += 1,
        }
    }

    fn conserved(&self) -> bool {
        self.admitted
            .checked_add(self.policed)
            .and_then(|s| s.checked_add(self.blocked))
            == Some(self.offered)
    }
}

/// Post-warmup counters of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub offered: u64,
    pub admitted: u64,
    pub policed: u64,
    pub blocked: u64,
    pub per_class: Vec<ClassCounts>,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
}

impl RunMetrics {
    /// Validates `offered = admitted + policed + blocked` for the totals and
    /// every class, and that the totals equal the class sums.
    pub fn new(
        totals: ClassCounts,
        per_class: Vec<ClassCounts>,
        horizon: f64,
        warmup: f64,
        seed: u64,
    ) -> Result<Self> {
        if !totals.conserved() {
            return Err(Error::internal(format!(
                "totals violate conservation: {totals:?}"
            )));
        }
        let mut sum = ClassCounts::default();
        for (c, counts) in per_class.iter().enumerate() {
            if !counts.conserved() {
                return Err(Error::internal(format!(
                    "class {c} violates conservation: {counts:?}"
                )));
            }
            sum.offered += counts.offered;
            sum.admitted += counts.admitted;
            sum.policed += counts.policed;
            sum.blocked += counts.blocked;
        }
        if !per_class.is_empty() && sum != totals {
            return Err(Error::internal(format!(
                "class counts {sum:?} do not add up to totals {totals:?}"
            )));
        }
        Ok(RunMetrics {
            offered: totals.offered,
            admitted: totals.admitted,
            policed: totals.policed,
            blocked: totals.blocked,
            per_class,
            horizon,
            warmup,
            seed,
        })
    }

    pub fn from_class_counts(
        per_class: Vec<ClassCounts>,
        horizon: f64,
        warmup: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut totals = ClassCounts::default();
        for c in &per_class {
            totals.offered += c.offered;
            totals.admitted += c.admitted;
            totals.policed += c.policed;
            totals.blocked += c.blocked;
        }
        Self::new(totals, per_class, horizon, warmup, seed)
    }

    pub fn totals(&self) -> ClassCounts {
        ClassCounts {
            offered: self.offered,
            admitted: self.admitted,
            policed: self.policed,
            blocked: self.blocked,
        }
    }

    /// Metrics of a single class, as if it were the only one.
    pub fn class_only(&self, class_id: usize) -> Result<Self> {
        let counts = *self
            .per_class
            .get(class_id)
            .ok_or_else(|| Error::arg(format!("no counters for class {class_id}")))?;
        Self::new(counts, vec![counts], self.horizon, self.warmup, self.seed)
    }

    pub fn is_conserved(&self) -> bool {
        self.totals().conserved() && self.per_class.iter().all(ClassCounts::conserved)
    }
}

/// Which denials count as blocking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockingScope {
    /// Requests that passed the gate but found every partition full.
    Server,
    /// Blocked plus policed, over everything offered.
    TotalDenial,
}

pub fn blocking_probability(m: &RunMetrics, scope: BlockingScope) -> Result<f64> {
    let (num, den) = match scope {
        BlockingScope::Server => (m.blocked, m.offered - m.policed),
        BlockingScope::TotalDenial => (m.blocked + m.policed, m.offered),
    };
    if den == 0 {
        return Err(Error::UndefinedMetric(format!(
            "{scope:?} blocking with no requests in the denominator"
        )));
    }
    Ok(num as f64 / den as f64)
}

/// Share of offered requests rejected by the policy gate.
pub fn policed_fraction(m: &RunMetrics) -> Result<f64> {
    if m.offered == 0 {
        return Err(Error::UndefinedMetric(
            "policed fraction with nothing offered".into(),
        ));
    }
    Ok(m.policed as f64 / m.offered as f64)
}

/// Mean and normal-approximation 95% half-width over replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub ci95_halfwidth: f64,
    /// Replications that had a defined value.
    pub samples: usize,
}

impl Estimate {
    /// A single sample gives no interval; its half-width is reported as 0.
    pub fn is_degenerate(&self) -> bool {
        self.samples < 2
    }

    pub fn contains(&self, value: f64) -> bool {
        (value - self.mean).abs() <= self.ci95_halfwidth
    }
}

const Z_95: f64 = 1.96;

/// Estimate from a list of per-replication values. Values are sorted before
/// summation so the result does not depend on input order.
pub fn estimate(values: &[f64]) -> Result<Estimate> {
    if values.is_empty() {
        return Err(Error::arg("cannot estimate from zero samples"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let ci95_halfwidth = if sorted.len() < 2 {
        0.0
    } else {
        let mut sq: Vec<f64> = sorted.iter().map(|v| (v - mean).powi(2)).collect();
        sq.sort_by(f64::total_cmp);
        let var = sq.iter().sum::<f64>() / (n - 1.0);
        Z_95 * var.sqrt() / n.sqrt()
    };
    Ok(Estimate {
        mean,
        ci95_halfwidth,
        samples: sorted.len(),
    })
}

/// Averages per-replication blocking. Replications whose metric is
/// undefined are skipped; if none is defined the metric is undefined.
pub fn aggregate(replications: &[RunMetrics], scope: BlockingScope) -> Result<Estimate> {
    if replications.is_empty() {
        return Err(Error::arg("aggregate needs at least one replication"));
    }
    let values: Vec<f64> = replications
        .iter()
        .filter_map(|m| blocking_probability(m, scope).ok())
        .collect();
    if values.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "{scope:?} blocking undefined in every replication"
        )));
    }
    estimate(&values)
}

/// Results for one (traffic rate, strategy) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub traffic_rate: f64,
    pub offered_erlangs: f64,
    pub strategy: String,
    pub replications: Vec<RunMetrics>,
    pub server: Option<Estimate>,
    pub total_denial: Option<Estimate>,
    pub policed_fraction: Option<f64>,
}

impl SweepPoint {
    pub fn new(
        traffic_rate: f64,
        offered_erlangs: f64,
        strategy: impl Into<String>,
        replications: Vec<RunMetrics>,
    ) -> Result<Self> {
        let server = defined(aggregate(&replications, BlockingScope::Server))?;
        let total_denial = defined(aggregate(&replications, BlockingScope::TotalDenial))?;
        let policed: Vec<f64> = replications
            .iter()
            .filter_map(|m| policed_fraction(m).ok())
            .collect();
        let policed_fraction = if policed.is_empty() {
            None
        } else {
            Some(estimate(&policed)?.mean)
        };
        Ok(SweepPoint {
            traffic_rate,
            offered_erlangs,
            strategy: strategy.into(),
            replications,
            server,
            total_denial,
            policed_fraction,
        })
    }

    pub fn mean_blocking(&self) -> Option<f64> {
        self.server.map(|e| e.mean)
    }

    pub fn ci95_halfwidth(&self) -> Option<f64> {
        self.server.map(|e| e.ci95_halfwidth)
    }
}

fn defined(r: Result<Estimate>) -> Result<Option<Estimate>> {
    match r {
        Ok(e) => Ok(Some(e)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub const CSV_HEADER: &str = "traffic_rate_mbps,offered_erlangs,strategy,replications,mean_server_blocking,ci95_server,mean_total_denial,ci95_total,mean_policed_fraction";

/// Shortest decimal form of `x` rounded to 12 significant digits.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn opt_number(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

/// One header line plus one row per point, ordered by traffic rate then
/// strategy name. Undefined values are left empty.
pub fn to_csv(points: &[SweepPoint]) -> String {
    let mut order: Vec<&SweepPoint> = points.iter().collect();
    order.sort_by(|a, b| {
        a.traffic_rate
            .total_cmp(&b.traffic_rate)
            .then_with(|| a.strategy.cmp(&b.strategy))
    });
    let mut out = String::with_capacity(CSV_HEADER.len() + 1 + points.len() * 96);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in order {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            format_number(p.traffic_rate),
            format_number(p.offered_erlangs),
            p.strategy,
            p.replications.len(),
            opt_number(p.server.map(|e| e.mean)),
            opt_number(p.server.map(|e| e.ci95_halfwidth)),
            opt_number(p.total_denial.map(|e| e.mean)),
            opt_number(p.total_denial.map(|e| e.ci95_halfwidth)),
            opt_number(p.policed_fraction),
        );
    }
    out
}

/// A parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub traffic_rate_mbps: f64,
    pub offered_erlangs: f64,
    pub strategy: String,
    pub replications: usize,
    pub mean_server_blocking: Option<f64>,
    pub ci95_server: Option<f64>,
    pub mean_total_denial: Option<f64>,
    pub ci95_total: Option<f64>,
    pub mean_policed_fraction: Option<f64>,
}

/// Reads text produced by [`to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::arg(format!("unexpected CSV header: {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::arg(format!(
                "CSV row {} has {} fields",
                i + 2,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::arg(format!("CSV row {}: bad number {s:?}", i + 2)))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        rows.push(CsvRow {
            traffic_rate_mbps: num(fields[0])?,
            offered_erlangs: num(fields[1])?,
            strategy: fields[2].to_string(),
            replications: fields[3]
                .parse()
                .map_err(|_| Error::arg(format!("CSV row {}: bad count", i + 2)))?,
            mean_server_blocking: opt(fields[4])?,
            ci95_server: opt(fields[5])?,
            mean_total_denial: opt(fields[6])?,
            ci95_total: opt(fields[7])?,
            mean_policed_fraction: opt(fields[8])?,
        });
    }
    Ok(rows)
}
