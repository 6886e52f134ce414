//! Closed-form loss-system probabilities.
//!
//! Everything here is a pure function of its arguments. Occupancy enters
//! [`free_port_selection_prob`] as a parameter; this module never holds
//! simulation state.

use crate::error::{Error, Result};

/// Largest capacity accepted by [`erlang_b_direct`]; `171!` overflows `f64`.
pub const DIRECT_CAPACITY_LIMIT: u32 = 170;

/// Offered traffic in Erlangs (arrival rate times mean holding time).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct OfferedLoad(f64);

impl OfferedLoad {
    pub fn new(erlangs: f64) -> Result<Self> {
        if !erlangs.is_finite() || erlangs < 0.0 {
            return Err(Error::arg(format!(
                "offered load must be finite and non-negative, got {erlangs}"
            )));
        }
        Ok(OfferedLoad(erlangs))
    }

    pub fn erlangs(self) -> f64 {
        self.0
    }
}

/// Number of ports in one server partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartitionSpec {
    pub capacity: u32,
}

impl PartitionSpec {
    pub fn new(capacity: u32) -> Self {
        PartitionSpec { capacity }
    }
}

/// Partitions `i..j-1` that a request found fully occupied, each with the
/// load it was offered.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainSpec {
    pub stages: Vec<(OfferedLoad, PartitionSpec)>,
}

impl ChainSpec {
    pub fn new(stages: Vec<(OfferedLoad, PartitionSpec)>) -> Self {
        ChainSpec { stages }
    }

    pub fn concat(&self, other: &ChainSpec) -> ChainSpec {
        let mut stages = self.stages.clone();
        stages.extend_from_slice(&other.stages);
        ChainSpec { stages }
    }
}

/// Per-class admission probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyWeights {
    weights: Vec<f64>,
}

impl PolicyWeights {
    /// Absolute tolerance on the weight sum.
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::arg("policy weights must not be empty"));
        }
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() || !(0.0..=1.0).contains(w) {
                return Err(Error::arg(format!(
                    "policy weight {i} = {w} is outside [0, 1]"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::arg(format!(
                "policy weights sum to {sum}, expected 1"
            )));
        }
        Ok(PolicyWeights { weights })
    }

    /// Equal weight `1/classes` for every class.
    pub fn uniform(classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::arg("uniform weights need at least one class"));
        }
        Self::new(vec![1.0 / classes as f64; classes])
    }

    /// Weights proportional to the given non-negative shares.
    pub fn proportional(shares: &[f64]) -> Result<Self> {
        let total: f64 = shares.iter().sum();
        if shares.iter().any(|s| !s.is_finite() || *s < 0.0) || total.is_nan() || total <= 0.0 {
            return Err(Error::arg(
                "proportional weights need non-negative shares with a positive total",
            ));
        }
        Self::new(shares.iter().map(|s| s / total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, class_id: usize) -> Option<f64> {
        self.weights.get(class_id).copied()
    }

    pub fn max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }
}

fn check_probability(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::internal(format!(
            "{what} produced {value}, outside [0, 1]"
        )))
    }
}

fn require_probability(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::arg(format!("{name} = {value} is outside [0, 1]")))
    }
}

/// Erlang-B blocking probability via the recurrence
/// `B(E,0) = 1`, `B(E,C) = E·B(E,C-1) / (C + E·B(E,C-1))`.
pub fn erlang_b(load: OfferedLoad, capacity: PartitionSpec) -> Result<f64> {
    let e = load.erlangs();
    let mut b = 1.0;
    for c in 1..=capacity.capacity {
        b = erlang_b_step(e, c, b);
    }
    check_probability(b, "erlang_b")
}

/// One step of the Erlang-B recurrence from `C-1` to `C` ports.
#[inline]
pub fn erlang_b_step(erlangs: f64, capacity: u32, previous: f64) -> f64 {
    let num = erlangs * previous;
    num / (capacity as f64 + num)
}

/// Erlang-B evaluated literally as `(E^C/C!) / Σ_{k=0..C} E^k/k!`.
///
/// Only meant as a cross-check for small capacities.
pub fn erlang_b_direct(load: OfferedLoad, capacity: PartitionSpec) -> Result<f64> {
    if capacity.capacity > DIRECT_CAPACITY_LIMIT {
        return Err(Error::arg(format!(
            "capacity {} exceeds the factorial limit {DIRECT_CAPACITY_LIMIT}; use erlang_b (recurrence form)",
            capacity.capacity
        )));
    }
    let e = load.erlangs();
    let term = |k: u32| e.powi(k as i32) / factorial(k);
    let denominator: f64 = (0..=capacity.capacity).map(term).sum();
    check_probability(term(capacity.capacity) / denominator, "erlang_b_direct")
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Probability that every stage of the chain blocks, assuming independence
/// between partitions. The empty chain yields 1.
pub fn chain_blocking(chain: &ChainSpec) -> Result<f64> {
    let mut product = 1.0;
    for &(load, part) in &chain.stages {
        product *= erlang_b(load, part)?;
    }
    check_probability(product, "chain_blocking")
}

/// `(1 - 1/k)^(j-1) · (1/k) · (C_j - Q_j) / C_j`: the chance that a random
/// selection among `k` partitions settles on partition `j` (1-based) and
/// finds a free port there.
pub fn free_port_selection_prob(
    k: usize,
    j: usize,
    capacity_j: PartitionSpec,
    occupied_j: u32,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::arg("partition count k must be positive"));
    }
    if j == 0 || j > k {
        return Err(Error::arg(format!(
            "partition index j = {j} must be in 1..={k}"
        )));
    }
    let cap = capacity_j.capacity;
    if cap == 0 {
        return Err(Error::arg("partition capacity must be at least 1"));
    }
    if occupied_j > cap {
        return Err(Error::arg(format!(
            "occupancy {occupied_j} exceeds partition capacity {cap}"
        )));
    }
    let kf = k as f64;
    let miss = (1.0 - 1.0 / kf).powi((j - 1) as i32);
    let free = f64::from(cap - occupied_j) / f64::from(cap);
    check_probability(miss * (1.0 / kf) * free, "free_port_selection_prob")
}

/// Admission probability of a gated class: `weight · base`.
pub fn policy_admission_prob(weight: f64, base: f64) -> Result<f64> {
    let w = require_probability(weight, "weight")?;
    let b = require_probability(base, "base")?;
    check_probability(w * b, "policy_admission_prob")
}

/// Density of the sum of `k` iid exponential inter-arrivals with the given rate.
pub fn erlang_k_pdf(k: u32, rate: f64, t: f64) -> Result<f64> {
    check_erlang_args(k, rate, t)?;
    if t == 0.0 {
        return Ok(if k == 1 { rate } else { 0.0 });
    }
    let kf = f64::from(k);
    // log-space keeps large k from overflowing rate^k and (k-1)!
    let log_density = kf * rate.ln() + (kf - 1.0) * t.ln() - rate * t - ln_factorial(k - 1);
    Ok(log_density.exp())
}

/// Cumulative distribution of the same sum:
/// `1 - Σ_{n=0..k-1} e^{-rate·t} (rate·t)^n / n!`.
pub fn erlang_k_cdf(k: u32, rate: f64, t: f64) -> Result<f64> {
    check_erlang_args(k, rate, t)?;
    let x = rate * t;
    let mut term = (-x).exp();
    let mut tail = term;
    for n in 1..k {
        term *= x / f64::from(n);
        tail += term;
    }
    Ok((1.0 - tail).clamp(0.0, 1.0))
}

fn check_erlang_args(k: u32, rate: f64, t: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::arg("Erlang shape k must be positive"));
    }
    if !rate.is_finite() || rate <= 0.0 {
        return Err(Error::arg(format!(
            "Erlang rate must be positive, got {rate}"
        )));
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::arg(format!(
            "time must be finite and non-negative, got {t}"
        )));
    }
    Ok(())
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| f64::from(i).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn load(e: f64) -> OfferedLoad {
        OfferedLoad::new(e).unwrap()
    }

    fn part(c: u32) -> PartitionSpec {
        PartitionSpec::new(c)
    }

    #[test]
    fn erlang_b_examples() {
        assert_eq!(erlang_b(load(1.0), part(0)).unwrap(), 1.0);
        assert_eq!(erlang_b(load(0.0), part(5)).unwrap(), 0.0);
        assert!((erlang_b(load(2.0), part(2)).unwrap() - 0.4).abs() < 1e-12);
        assert!((erlang_b(load(1.0), part(1)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn direct_examples() {
        assert!((erlang_b_direct(load(2.0), part(2)).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(erlang_b_direct(load(0.0), part(3)).unwrap(), 0.0);
        assert_eq!(erlang_b_direct(load(1.0), part(0)).unwrap(), 1.0);
    }

    #[test]
    fn direct_rejects_large_capacity() {
        let err = erlang_b_direct(load(1.0), part(171)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(ref m) if m.contains("recurrence")));
        assert!(erlang_b_direct(load(1.0), part(170)).is_ok());
    }

    #[test]
    fn offered_load_rejects_bad_values() {
        assert!(OfferedLoad::new(-0.1).is_err());
        assert!(OfferedLoad::new(f64::NAN).is_err());
        assert!(OfferedLoad::new(f64::INFINITY).is_err());
    }

    #[test]
    fn chain_examples() {
        assert_eq!(chain_blocking(&ChainSpec::default()).unwrap(), 1.0);
        let one = ChainSpec::new(vec![(load(2.0), part(2))]);
        assert!((chain_blocking(&one).unwrap() - 0.4).abs() < 1e-12);
        let two = ChainSpec::new(vec![(load(1.0), part(1)), (load(2.0), part(2))]);
        assert!((chain_blocking(&two).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn free_port_examples() {
        assert_eq!(free_port_selection_prob(1, 1, part(10), 0).unwrap(), 1.0);
        assert_eq!(free_port_selection_prob(2, 2, part(10), 5).unwrap(), 0.125);
        assert_eq!(free_port_selection_prob(4, 2, part(8), 8).unwrap(), 0.0);
    }

    #[test]
    fn free_port_errors() {
        assert!(free_port_selection_prob(2, 1, part(4), 5).is_err());
        assert!(free_port_selection_prob(2, 1, part(0), 0).is_err());
        assert!(free_port_selection_prob(2, 3, part(4), 0).is_err());
        assert!(free_port_selection_prob(2, 0, part(4), 0).is_err());
        assert!(free_port_selection_prob(0, 1, part(4), 0).is_err());
    }

    #[test]
    fn policy_examples() {
        assert_eq!(policy_admission_prob(1.0, 0.125).unwrap(), 0.125);
        assert_eq!(policy_admission_prob(0.0, 0.9).unwrap(), 0.0);
        assert_eq!(policy_admission_prob(0.25, 0.125).unwrap(), 0.03125);
        assert!(policy_admission_prob(1.5, 0.1).is_err());
        assert!(policy_admission_prob(0.5, -0.1).is_err());
    }

    #[test]
    fn erlang_k_examples() {
        let lambda = 3.0;
        for t in [0.0, 0.2, 1.0, 4.0] {
            let got = erlang_k_pdf(1, lambda, t).unwrap();
            assert!((got - lambda * (-lambda * t).exp()).abs() < 1e-12);
        }
        assert_eq!(erlang_k_pdf(2, 1.0, 0.0).unwrap(), 0.0);
        assert!((erlang_k_pdf(2, 1.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        assert!(erlang_k_pdf(2, 0.0, 1.0).is_err());
        assert!(erlang_k_pdf(2, -1.0, 1.0).is_err());
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn erlang_k_pdf_integrates_to_one() {
        for k in [1, 2, 5] {
            for rate in [0.5, 2.0] {
                let upper = 50.0 / rate;
                let mass = simpson(|t| erlang_k_pdf(k, rate, t).unwrap(), 0.0, upper, 20_000);
                assert!((mass - 1.0).abs() < 1e-6, "k={k} rate={rate} mass={mass}");
            }
        }
    }

    #[test]
    fn erlang_k_cdf_matches_integrated_pdf() {
        for k in [1, 2, 5] {
            for t in [0.3, 1.0, 2.5, 7.0] {
                let rate = 1.7;
                let q = simpson(|s| erlang_k_pdf(k, rate, s).unwrap(), 0.0, t, 4_000);
                let cdf = erlang_k_cdf(k, rate, t).unwrap();
                assert!((q - cdf).abs() < 1e-9, "k={k} t={t}: {q} vs {cdf}");
            }
        }
    }

    #[test]
    fn weights_validation() {
        assert!(PolicyWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(PolicyWeights::new(vec![0.5, 0.5 + 5e-10]).is_ok());
        assert!(PolicyWeights::new(vec![0.5, 0.6]).is_err());
        assert!(PolicyWeights::new(vec![1.2, -0.2]).is_err());
        assert!(PolicyWeights::new(vec![]).is_err());
        let p = PolicyWeights::proportional(&[1.0, 3.0]).unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.75]);
        assert_eq!(PolicyWeights::uniform(4).unwrap().get(3), Some(0.25));
    }

    #[test]
    fn oracle_grid() {
        for e in [0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            for c in 0..=20 {
                let a = erlang_b(load(e), part(c)).unwrap();
                let b = erlang_b_direct(load(e), part(c)).unwrap();
                assert!((a - b).abs() < 1e-12, "E={e} C={c}: {a} vs {b}");
            }
        }
    }

    proptest! {
        #[test]
        fn strictly_decreasing_in_capacity(e in 0.01f64..50.0, c in 0u32..60) {
            let lo = erlang_b(load(e), part(c)).unwrap();
            let hi = erlang_b(load(e), part(c + 1)).unwrap();
            prop_assert!(hi < lo);
        }

        #[test]
        fn nondecreasing_in_load(e in 0.0f64..50.0, d in 0.0f64..10.0, c in 0u32..60) {
            let a = erlang_b(load(e), part(c)).unwrap();
            let b = erlang_b(load(e + d), part(c)).unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn recurrence_consistent(e in 0.0f64..100.0, c in 1u32..100) {
            let prev = erlang_b(load(e), part(c - 1)).unwrap();
            let cur = erlang_b(load(e), part(c)).unwrap();
            prop_assert_eq!(cur, e * prev / (c as f64 + e * prev));
        }

        #[test]
        fn chain_concat_is_product(
            a in proptest::collection::vec((0.0f64..20.0, 0u32..30), 0..6),
            b in proptest::collection::vec((0.0f64..20.0, 0u32..30), 0..6),
        ) {
            let mk = |v: &[(f64, u32)]| ChainSpec::new(v.iter().map(|&(e, c)| (load(e), part(c))).collect());
            let (ca, cb) = (mk(&a), mk(&b));
            let joined = chain_blocking(&ca.concat(&cb)).unwrap();
            let split = chain_blocking(&ca).unwrap() * chain_blocking(&cb).unwrap();
            prop_assert!((joined - split).abs() <= 1e-15 + 1e-12 * split);
        }

        #[test]
        fn free_port_bounds(k in 1usize..40, cap in 1u32..50, q_frac in 0.0f64..=1.0) {
            let q = ((cap as f64) * q_frac).floor() as u32;
            for j in 1..=k {
                let v = free_port_selection_prob(k, j, part(cap), q).unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v == 0.0, q == cap);
            }
        }

        #[test]
        fn free_port_strictly_decreasing_in_j(k in 2usize..40, cap in 1u32..50, q in 0u32..50) {
            prop_assume!(q < cap);
            let mut last = f64::INFINITY;
            for j in 1..=k {
                let v = free_port_selection_prob(k, j, part(cap), q).unwrap();
                prop_assert!(v < last);
                last = v;
            }
        }

        #[test]
        fn policy_bounded_by_min(w in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let v = policy_admission_prob(w, b).unwrap();
            prop_assert!(v <= w.min(b));
        }
    }
}
