//! Event-driven loss simulation of a partitioned server.
//!
//! Requests probe partitions cyclically from a class-dependent home
//! partition and take the first free port. Blocked and policed requests
//! are cleared. Under the policy strategy a per-class Bernoulli gate runs
//! once per request before any probing.
//!
//! While every port is busy the run skips ahead to the next departure and
//! draws the per-class counts of the cleared arrivals in between directly;
//! by Poisson thinning this has the same law as stepping each arrival.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::analytic::PolicyWeights;
use crate::error::{Error, Result};
use crate::metrics::{ClassCounts, RunMetrics};
use crate::traffic::{self, ArrivalStream, SessionRequest, SimRng, WorkloadSpec};

/// Port capacities and live occupancy of the `k` partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterState {
    capacities: Vec<u32>,
    occupied: Vec<u32>,
    free: u64,
}

impl ClusterState {
    /// An empty server with the given ports per partition.
    pub fn new(capacities: Vec<u32>) -> Result<Self> {
        if capacities.is_empty() {
            return Err(Error::arg("at least one partition is required"));
        }
        let free = capacities.iter().map(|&c| u64::from(c)).sum();
        let occupied = vec![0; capacities.len()];
        Ok(ClusterState {
            capacities,
            occupied,
            free,
        })
    }

    pub fn with_occupancy(capacities: Vec<u32>, occupied: Vec<u32>) -> Result<Self> {
        let mut state = Self::new(capacities)?;
        if occupied.len() != state.capacities.len() {
            return Err(Error::arg("occupancy and capacity lists differ in length"));
        }
        for (j, (&q, &c)) in occupied.iter().zip(&state.capacities).enumerate() {
            if q > c {
                return Err(Error::arg(format!(
                    "partition {j}: occupancy {q} exceeds capacity {c}"
                )));
            }
            state.free -= u64::from(q);
        }
        state.occupied = occupied;
        Ok(state)
    }

    pub fn partitions(&self) -> usize {
        self.capacities.len()
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    pub fn occupied(&self) -> &[u32] {
        &self.occupied
    }

    pub fn free_ports(&self) -> u64 {
        self.free
    }

    pub fn busy_ports(&self) -> u64 {
        self.occupied.iter().map(|&q| u64::from(q)).sum()
    }

    /// Checks `0 <= occupied[j] <= capacities[j]` and the cached free count.
    pub fn check_invariants(&self) -> Result<()> {
        let mut free = 0u64;
        for (j, (&q, &c)) in self.occupied.iter().zip(&self.capacities).enumerate() {
            if q > c {
                return Err(Error::internal(format!(
                    "partition {j} holds {q} sessions but has {c} ports"
                )));
            }
            free += u64::from(c - q);
        }
        if free != self.free {
            return Err(Error::internal(format!(
                "free-port counter {} disagrees with occupancy ({free})",
                self.free
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdmissionOutcome {
    Admitted(usize),
    Policed,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Uncontrolled,
    Policy,
}

/// How a class weight becomes a gate pass probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WeightScaling {
    /// The weight itself.
    #[default]
    Literal,
    /// The weight divided by the largest weight.
    MaxNormalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpec {
    pub mode: Mode,
    pub weights: Option<PolicyWeights>,
    pub weight_scaling: WeightScaling,
}

impl StrategySpec {
    pub fn uncontrolled() -> Self {
        StrategySpec {
            mode: Mode::Uncontrolled,
            weights: None,
            weight_scaling: WeightScaling::Literal,
        }
    }

    pub fn policy(weights: PolicyWeights, weight_scaling: WeightScaling) -> Self {
        StrategySpec {
            mode: Mode::Policy,
            weights: Some(weights),
            weight_scaling,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.mode {
            Mode::Uncontrolled => "uncontrolled",
            Mode::Policy => "policy",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.mode, &self.weights) {
            (Mode::Policy, None) => Err(Error::config("policy strategy requires weights")),
            (Mode::Uncontrolled, Some(_)) => Err(Error::config(
                "uncontrolled strategy must not carry weights",
            )),
            _ => Ok(()),
        }
    }

    /// Gate pass probability for `class_id`, or `None` when ungated.
    fn gate(&self, class_id: usize) -> Result<Option<f64>> {
        self.validate()?;
        match &self.weights {
            Some(w) if self.mode == Mode::Policy => {
                effective_gate(w, class_id, self.weight_scaling).map(Some)
            }
            _ => Ok(None),
        }
    }
}

/// Pass probability of the admission gate for one class.
pub fn effective_gate(
    weights: &PolicyWeights,
    class_id: usize,
    scaling: WeightScaling,
) -> Result<f64> {
    let w = weights.get(class_id).ok_or_else(|| {
        Error::arg(format!(
            "class {class_id} has no policy weight ({} weights configured)",
            weights.len()
        ))
    })?;
    Ok(match scaling {
        WeightScaling::Literal => w,
        WeightScaling::MaxNormalized => {
            let max = weights.max();
            // all-zero weights cannot sum to one, so max > 0 here
            w / max
        }
    })
}

/// Decides one request against the current occupancy.
pub fn admit(
    state: &mut ClusterState,
    request: &SessionRequest,
    strategy: &StrategySpec,
    rng: &mut SimRng,
) -> Result<AdmissionOutcome> {
    let gate = strategy.gate(request.class_id)?;
    Ok(admit_gated(state, request.class_id, gate, rng))
}

#[inline]
fn admit_gated(
    state: &mut ClusterState,
    class_id: usize,
    gate: Option<f64>,
    rng: &mut SimRng,
) -> AdmissionOutcome {
    if let Some(p) = gate {
        if rng.gen::<f64>() >= p {
            return AdmissionOutcome::Policed;
        }
    }
    if state.free == 0 {
        // every probe would find a full partition
        return AdmissionOutcome::Blocked;
    }
    let k = state.capacities.len();
    let mut j = class_id % k;
    for _ in 0..k {
        if state.occupied[j] < state.capacities[j] {
            state.occupied[j] += 1;
            state.free -= 1;
            return AdmissionOutcome::Admitted(j);
        }
        j += 1;
        if j == k {
            j = 0;
        }
    }
    unreachable!("free-port counter is positive but no partition has a free port")
}

fn poisson(mean: f64, rng: &mut SimRng) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::internal(format!("poisson mean {mean}: {e}")))?;
    let n: f64 = d.sample(rng);
    Ok(n as u64)
}

/// Ends one session on `partition_index`.
pub fn release(state: &mut ClusterState, partition_index: usize) -> Result<()> {
    let slot = state.occupied.get_mut(partition_index).ok_or_else(|| {
        Error::internal(format!("release on unknown partition {partition_index}"))
    })?;
    if *slot == 0 {
        return Err(Error::internal(format!(
            "release on empty partition {partition_index}"
        )));
    }
    *slot -= 1;
    state.free += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Arrival(SessionRequest),
    Departure {
        partition_index: usize,
        class_id: usize,
    },
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::Departure { .. } => 0,
            EventKind::Arrival(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy)]
struct Queued {
    event: Event,
    seq: u64,
}

impl Queued {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.event
            .time
            .total_cmp(&other.event.time)
            .then_with(|| self.event.kind.rank().cmp(&other.event.kind.rank()))
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for BinaryHeap's max-heap
        other.key_cmp(self)
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

/// Future-event list ordered by time, then departures before arrivals,
/// then insertion order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Queued>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Queued { event, seq });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|q| q.event)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|q| q.event.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Simulation parameters besides the workload.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams<'a> {
    pub capacities: &'a [u32],
    pub strategy: &'a StrategySpec,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
}

/// A finished run with end-of-horizon state.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub metrics: RunMetrics,
    pub final_state: ClusterState,
    /// Admissions over the whole horizon, warmup included.
    pub admissions: u64,
    /// Departures processed up to the horizon.
    pub departures: u64,
}

/// Runs one replication and returns its post-warmup counters.
pub fn run(
    workload: &WorkloadSpec,
    capacities: &[u32],
    strategy: &StrategySpec,
    horizon: f64,
    warmup: f64,
    seed: u64,
) -> Result<RunMetrics> {
    let params = RunParams {
        capacities,
        strategy,
        horizon,
        warmup,
        seed,
    };
    Ok(run_detailed(workload, &params)?.metrics)
}

/// Like [`run`], also returning the final occupancy.
///
/// Arrival times and classes are drawn from `seed` independently of
/// admission decisions, so strategies run with the same seed see the same
/// requests. Holding times are drawn when a request is admitted.
pub fn run_detailed(workload: &WorkloadSpec, params: &RunParams<'_>) -> Result<RunReport> {
    let &RunParams {
        capacities,
        strategy,
        horizon,
        warmup,
        seed,
    } = params;
    if !horizon.is_finite() || horizon <= 0.0 {
        return Err(Error::arg(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !warmup.is_finite() || warmup < 0.0 || warmup >= horizon {
        return Err(Error::arg(format!(
            "warmup {warmup} must lie in [0, horizon = {horizon})"
        )));
    }
    strategy.validate()?;
    let classes = workload
        .clusters
        .iter()
        .map(|c| c.class_id + 1)
        .max()
        .unwrap_or(0);
    let gates = (0..classes)
        .map(|c| strategy.gate(c))
        .collect::<Result<Vec<_>>>()?;

    let mut state = ClusterState::new(capacities.to_vec())?;
    let mut arrivals = ArrivalStream::new(workload, horizon, seed)?;
    let source_class: Vec<usize> = arrivals.sources().iter().map(|s| s.class_id).collect();
    let mut class_rate = vec![0.0; classes];
    for s in arrivals.sources() {
        class_rate[s.class_id] += s.rate;
    }
    let mut gate_rng = traffic::seeded_rng(seed, traffic::GATE_STREAM);
    let mut saturation_rng = traffic::seeded_rng(seed, traffic::SATURATION_STREAM);
    let mut departures = EventQueue::new();
    let mut counts = vec![ClassCounts::default(); classes];
    let mut admissions = 0u64;
    let mut departed = 0u64;

    let mut next_departure = f64::INFINITY;
    let mut depart_until = |limit: f64,
                            state: &mut ClusterState,
                            departures: &mut EventQueue,
                            next_departure: &mut f64|
     -> Result<()> {
        // `<=`: a departure precedes an arrival at the same instant
        while *next_departure <= limit {
            let event = departures.pop().expect("departure time was peeked");
            if let EventKind::Departure {
                partition_index, ..
            } = event.kind
            {
                release(state, partition_index)?;
                departed += 1;
            }
            *next_departure = departures.peek_time().unwrap_or(f64::INFINITY);
        }
        Ok(())
    };

    while let Some(arrival) = arrivals.next_arrival() {
        depart_until(
            arrival.time,
            &mut state,
            &mut departures,
            &mut next_departure,
        )?;
        let class_id = source_class[arrival.source];
        let outcome = admit_gated(&mut state, class_id, gates[class_id], &mut gate_rng);
        if let AdmissionOutcome::Admitted(j) = outcome {
            admissions += 1;
            let end = arrival.time + arrivals.holding_time(&arrival);
            departures.push(Event {
                time: end,
                kind: EventKind::Departure {
                    partition_index: j,
                    class_id,
                },
            });
            next_departure = next_departure.min(end);
            debug_assert!(state.occupied[j] <= state.capacities[j]);
        }
        if arrival.time >= warmup {
            counts[class_id].record(outcome);
        }
        if state.free == 0 {
            // Nothing can be admitted before the next departure, so the
            // arrivals in between are only counted: per class they are
            // independent Poisson counts, split by the gate.
            let until = next_departure.min(horizon);
            let span = until - arrival.time.max(warmup);
            if span > 0.0 {
                for (c, counts) in counts.iter_mut().enumerate() {
                    let pass = gates[c].unwrap_or(1.0);
                    let blocked = poisson(class_rate[c] * pass * span, &mut saturation_rng)?;
                    let policed =
                        poisson(class_rate[c] * (1.0 - pass) * span, &mut saturation_rng)?;
                    counts.offered += blocked + policed;
                    counts.blocked += blocked;
                    counts.policed += policed;
                }
            }
            if until >= horizon {
                break;
            }
            arrivals.resume_at(until);
        }
    }
    depart_until(horizon, &mut state, &mut departures, &mut next_departure)?;

    state.check_invariants()?;
    if state.busy_ports() != admissions - departed {
        return Err(Error::internal(format!(
            "occupancy {} != admissions {admissions} - departures {departed}",
            state.busy_ports()
        )));
    }
    let metrics = RunMetrics::from_class_counts(counts, horizon, warmup, seed)?;
    Ok(RunReport {
        metrics,
        final_state: state,
        admissions,
        departures: departed,
    })
}
