//! Multirate client workload and seeded Poisson request generation.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::Exp1;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

/// Generator used for every random stream in the simulator.
pub type SimRng = Xoshiro256PlusPlus;

// Sub-stream ids: one seed yields non-overlapping generators per role.
pub(crate) const ARRIVAL_STREAM: u32 = 0;
pub(crate) const GATE_STREAM: u32 = 1;
const HOLDING_MEANS_STREAM: u32 = 2;
const HOLDING_STREAM: u32 = 3;
pub(crate) const SATURATION_STREAM: u32 = 4;

/// Generator for sub-stream `stream` of `seed`, `2^192` draws apart.
pub(crate) fn seeded_rng(seed: u64, stream: u32) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    for _ in 0..stream {
        rng.long_jump();
    }
    rng
}

/// One client population.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    pub class_id: usize,
    /// Mb/s requested by this cluster.
    pub traffic_rate: f64,
    /// Steady-session requests per second.
    pub request_rate: f64,
    /// Mean port holding time in seconds.
    pub mean_holding: f64,
    /// Interactive-session requests per second.
    pub interactive_rate: f64,
}

impl ClusterSpec {
    /// Offered load in Erlangs from both request streams.
    pub fn offered_erlangs(&self) -> f64 {
        (self.request_rate + self.interactive_rate) * self.mean_holding
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub clusters: Vec<ClusterSpec>,
    /// Mb/s consumed by one admitted stream.
    pub per_stream_bandwidth: f64,
    pub min_hold: f64,
    pub max_hold: f64,
    pub seed: u64,
}

/// Parameters for [`WorkloadSpec::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadParams {
    pub num_clusters: usize,
    pub min_rate: f64,
    pub max_rate: f64,
    pub per_stream_bandwidth: f64,
    pub min_hold: f64,
    pub max_hold: f64,
    pub interactive_rate: f64,
    pub seed: u64,
}

impl WorkloadSpec {
    /// Builds linearly spaced clusters and draws each cluster's mean holding
    /// time once, uniformly from `[min_hold, max_hold]`, using `seed`.
    pub fn build(params: &WorkloadParams) -> Result<Self> {
        check_positive(params.per_stream_bandwidth, "per_stream_bandwidth")?;
        check_positive(params.min_hold, "min_hold")?;
        check_positive(params.max_hold, "max_hold")?;
        if params.min_hold > params.max_hold {
            return Err(Error::arg(format!(
                "min_hold {} exceeds max_hold {}",
                params.min_hold, params.max_hold
            )));
        }
        if !params.interactive_rate.is_finite() || params.interactive_rate < 0.0 {
            return Err(Error::arg(
                "interactive_rate must be finite and non-negative",
            ));
        }
        let mut rng = seeded_rng(params.seed, HOLDING_MEANS_STREAM);
        let mut clusters = build_clusters(params.num_clusters, params.min_rate, params.max_rate)?;
        for cluster in &mut clusters {
            cluster.request_rate = request_rate(cluster.traffic_rate, params.per_stream_bandwidth)?;
            cluster.mean_holding = rng.gen_range(params.min_hold..=params.max_hold);
            cluster.interactive_rate = params.interactive_rate;
        }
        Ok(WorkloadSpec {
            clusters,
            per_stream_bandwidth: params.per_stream_bandwidth,
            min_hold: params.min_hold,
            max_hold: params.max_hold,
            seed: params.seed,
        })
    }

    /// Copy with every arrival rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() || factor < 0.0 {
            return Err(Error::arg(format!(
                "load multiplier must be non-negative, got {factor}"
            )));
        }
        let mut out = self.clone();
        for c in &mut out.clusters {
            c.traffic_rate *= factor;
            c.request_rate *= factor;
            c.interactive_rate *= factor;
        }
        Ok(out)
    }

    pub fn offered_erlangs(&self) -> f64 {
        self.clusters.iter().map(ClusterSpec::offered_erlangs).sum()
    }

    /// Total request rate over both streams of every cluster.
    pub fn total_rate(&self) -> f64 {
        self.clusters
            .iter()
            .map(|c| c.request_rate + c.interactive_rate)
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_hold > self.max_hold {
            return Err(Error::arg("min_hold exceeds max_hold"));
        }
        for c in &self.clusters {
            if !(c.request_rate.is_finite() && c.request_rate >= 0.0)
                || !(c.interactive_rate.is_finite() && c.interactive_rate >= 0.0)
            {
                return Err(Error::arg(format!(
                    "cluster {} has an invalid rate",
                    c.class_id
                )));
            }
            check_positive(c.mean_holding, "mean_holding")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SessionKind {
    Steady,
    Interactive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionRequest {
    pub class_id: usize,
    pub arrival_time: f64,
    pub holding_time: f64,
    pub kind: SessionKind,
}

/// Clusters with traffic rates spaced linearly from `min_rate` to `max_rate`.
/// Request and holding fields are zero until a [`WorkloadSpec`] fills them.
pub fn build_clusters(count: usize, min_rate: f64, max_rate: f64) -> Result<Vec<ClusterSpec>> {
    if count == 0 {
        return Err(Error::arg("cluster count must be at least 1"));
    }
    if !min_rate.is_finite() || !max_rate.is_finite() || min_rate < 0.0 {
        return Err(Error::arg("cluster rates must be finite and non-negative"));
    }
    if min_rate > max_rate {
        return Err(Error::arg(format!(
            "min_rate {min_rate} exceeds max_rate {max_rate}"
        )));
    }
    let step = if count > 1 {
        (max_rate - min_rate) / (count - 1) as f64
    } else {
        0.0
    };
    Ok((0..count)
        .map(|c| ClusterSpec {
            class_id: c,
            traffic_rate: min_rate + c as f64 * step,
            request_rate: 0.0,
            mean_holding: 0.0,
            interactive_rate: 0.0,
        })
        .collect())
}

/// Requests per second implied by a traffic rate in Mb/s.
pub fn request_rate(traffic_rate: f64, per_stream_bandwidth: f64) -> Result<f64> {
    check_positive(per_stream_bandwidth, "per_stream_bandwidth")?;
    if !traffic_rate.is_finite() || traffic_rate < 0.0 {
        return Err(Error::arg(format!(
            "traffic rate must be non-negative, got {traffic_rate}"
        )));
    }
    Ok(traffic_rate / per_stream_bandwidth)
}

/// Exponential inter-arrival time by inverse CDF.
pub fn next_interarrival<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> Result<f64> {
    check_positive(rate, "arrival rate")?;
    Ok(exp_variate(rng, 1.0 / rate))
}

/// Exponential holding time with the given mean.
pub fn sample_holding<R: Rng + ?Sized>(rng: &mut R, mean_holding: f64) -> Result<f64> {
    check_positive(mean_holding, "mean holding time")?;
    Ok(exp_variate(rng, mean_holding))
}

#[inline]
fn exp_variate<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    // ziggurat sampler; it can return exactly zero, so redraw to stay positive
    loop {
        let e: f64 = rng.sample(Exp1);
        if e > 0.0 {
            return e * mean;
        }
    }
}

fn check_positive(value: f64, name: &str) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::arg(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

/// Time-ordered superposition of all cluster request streams up to `horizon`.
pub fn merged_arrival_stream(spec: &WorkloadSpec, horizon: f64) -> Result<Vec<SessionRequest>> {
    Ok(ArrivalStream::new(spec, horizon, spec.seed)?.collect())
}

/// One Poisson source: a (cluster, session kind) pair with positive rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Source {
    pub class_id: usize,
    pub kind: SessionKind,
    pub rate: f64,
    pub mean_holding: f64,
}

/// An arrival before its holding time is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub source: usize,
}

/// Merged request stream of every positive-rate source.
///
/// The superposition of independent Poisson sources is generated as one
/// Poisson process at the summed rate whose points are labelled with
/// source `s` independently with probability `rate_s / total`; this has
/// the same law as running one clock per source. Holding times come from a
/// separate generator, so callers that only need them for admitted
/// requests can draw them on demand with [`ArrivalStream::holding_time`].
#[derive(Debug, Clone)]
pub struct ArrivalStream {
    sources: Vec<Source>,
    picker: Option<AliasTable>,
    mean_gap: f64,
    clock: f64,
    horizon: f64,
    arrival_rng: SimRng,
    holding_rng: SimRng,
}

impl ArrivalStream {
    pub fn new(spec: &WorkloadSpec, horizon: f64, seed: u64) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::arg(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        spec.validate()?;
        let mut sources = Vec::new();
        for c in &spec.clusters {
            for (rate, kind) in [
                (c.request_rate, SessionKind::Steady),
                (c.interactive_rate, SessionKind::Interactive),
            ] {
                if rate > 0.0 {
                    sources.push(Source {
                        class_id: c.class_id,
                        kind,
                        rate,
                        mean_holding: c.mean_holding,
                    });
                }
            }
        }
        let total: f64 = sources.iter().map(|s| s.rate).sum();
        let picker = if sources.len() > 1 {
            let weights: Vec<f64> = sources.iter().map(|s| s.rate).collect();
            Some(AliasTable::new(&weights))
        } else {
            None
        };
        Ok(ArrivalStream {
            sources,
            picker,
            mean_gap: if total > 0.0 {
                1.0 / total
            } else {
                f64::INFINITY
            },
            clock: 0.0,
            horizon,
            arrival_rng: seeded_rng(seed, ARRIVAL_STREAM),
            holding_rng: seeded_rng(seed, HOLDING_STREAM),
        })
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    /// Next arrival strictly before the horizon, without a holding time.
    #[inline]
    pub fn next_arrival(&mut self) -> Option<Arrival> {
        if self.sources.is_empty() || self.clock >= self.horizon {
            return None;
        }
        self.clock += exp_variate(&mut self.arrival_rng, self.mean_gap);
        if self.clock >= self.horizon {
            return None;
        }
        let source = match &self.picker {
            Some(p) => p.sample(&mut self.arrival_rng),
            None => 0,
        };
        Some(Arrival {
            time: self.clock,
            source,
        })
    }

    /// Restarts the clock at `time`; the next arrival is drawn afresh from
    /// there. Exact for Poisson sources because gaps are memoryless.
    pub fn resume_at(&mut self, time: f64) {
        debug_assert!(time >= self.clock);
        self.clock = time;
    }

    /// Draws a holding time for `arrival` from the holding-time generator.
    #[inline]
    pub fn holding_time(&mut self, arrival: &Arrival) -> f64 {
        exp_variate(
            &mut self.holding_rng,
            self.sources[arrival.source].mean_holding,
        )
    }

    pub fn request(&self, arrival: &Arrival, holding_time: f64) -> SessionRequest {
        let s = &self.sources[arrival.source];
        SessionRequest {
            class_id: s.class_id,
            arrival_time: arrival.time,
            holding_time,
            kind: s.kind,
        }
    }
}

impl Iterator for ArrivalStream {
    type Item = SessionRequest;

    fn next(&mut self) -> Option<SessionRequest> {
        let arrival = self.next_arrival()?;
        let holding = self.holding_time(&arrival);
        Some(self.request(&arrival, holding))
    }
}

/// Walker/Vose alias table for O(1) weighted index sampling.
#[derive(Debug, Clone)]
struct AliasTable {
    /// Acceptance threshold of each column, scaled to `u32::MAX`.
    threshold: Vec<u64>,
    alias: Vec<usize>,
}

impl AliasTable {
    /// `weights` must be non-empty, finite, non-negative with a positive sum.
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in small.into_iter().chain(large) {
            scaled[i] = 1.0;
        }
        let full = f64::from(u32::MAX) + 1.0;
        let threshold = scaled.iter().map(|p| (p * full).min(full) as u64).collect();
        AliasTable { threshold, alias }
    }

    /// One 64-bit draw: the high half picks the column, the low half decides
    /// between the column and its alias.
    #[inline]
    fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let x = rng.next_u64();
        let column = (((x >> 32) * self.alias.len() as u64) >> 32) as usize;
        let keep = (x & 0xffff_ffff) < self.threshold[column];
        // select without a data-dependent branch
        let alias = self.alias[column];
        alias ^ ((column ^ alias) & (keep as usize).wrapping_neg())
    }
}
