mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use vodsim::traffic::{
    build_clusters, merged_arrival_stream, next_interarrival, request_rate, sample_holding,
    ArrivalStream, SessionKind, WorkloadParams, WorkloadSpec,
};

fn params(num_clusters: usize, min_rate: f64, max_rate: f64) -> WorkloadParams {
    WorkloadParams {
        num_clusters,
        min_rate,
        max_rate,
        per_stream_bandwidth: 0.5,
        min_hold: 1.0,
        max_hold: 200.0,
        interactive_rate: 0.0,
        seed: 11,
    }
}

#[test]
fn cluster_rates_follow_linear_spacing() {
    let rates: Vec<f64> = build_clusters(30, 1.0, 15.5)
        .unwrap()
        .iter()
        .map(|c| c.traffic_rate)
        .collect();
    assert_eq!(rates.len(), 30);
    for (c, r) in rates.iter().enumerate() {
        assert!((r - (1.0 + 0.5 * c as f64)).abs() < 1e-12);
    }
    assert_eq!(rates[1], 1.5);
    assert_eq!(rates[29], 15.5);

    let one = build_clusters(1, 5.0, 5.0).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].traffic_rate, 5.0);

    let three: Vec<f64> = build_clusters(3, 1.0, 2.0)
        .unwrap()
        .iter()
        .map(|c| c.traffic_rate)
        .collect();
    assert_eq!(three, vec![1.0, 1.5, 2.0]);

    assert!(build_clusters(0, 1.0, 2.0).is_err());
    assert!(build_clusters(2, 3.0, 2.0).is_err());
}

#[test]
fn request_rate_examples() {
    assert_eq!(request_rate(1.0, 0.5).unwrap(), 2.0);
    assert_eq!(request_rate(0.0, 0.5).unwrap(), 0.0);
    assert_eq!(request_rate(15.5, 0.5).unwrap(), 31.0);
    assert!(request_rate(1.0, 0.0).is_err());
    assert!(request_rate(1.0, -0.5).is_err());
}

#[test]
fn workload_draws_mean_holding_within_bounds() {
    let w = WorkloadSpec::build(&params(30, 1.0, 15.5)).unwrap();
    for c in &w.clusters {
        assert!((1.0..=200.0).contains(&c.mean_holding));
        assert!((c.request_rate - c.traffic_rate / 0.5).abs() < 1e-12);
    }
    assert_eq!(w.clusters[0].request_rate, 2.0);
    assert_eq!(w.clusters[29].request_rate, 31.0);
    let again = WorkloadSpec::build(&params(30, 1.0, 15.5)).unwrap();
    assert_eq!(w, again);

    let mut bad = params(3, 1.0, 2.0);
    bad.min_hold = 300.0;
    assert!(WorkloadSpec::build(&bad).is_err());
}

fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

#[test]
fn interarrival_determinism_and_mean() {
    assert_eq!(
        next_interarrival(&mut rng(5), 2.0).unwrap(),
        next_interarrival(&mut rng(5), 2.0).unwrap()
    );
    let mut r = rng(6);
    let n = 100_000;
    let mean = (0..n)
        .map(|_| next_interarrival(&mut r, 2.0).unwrap())
        .sum::<f64>()
        / n as f64;
    assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    assert!(next_interarrival(&mut r, 0.0).is_err());
    assert!(next_interarrival(&mut r, -1.0).is_err());
}

#[test]
fn holding_determinism_and_mean() {
    assert_eq!(
        sample_holding(&mut rng(9), 10.0).unwrap(),
        sample_holding(&mut rng(9), 10.0).unwrap()
    );
    let mut r = rng(10);
    let n = 100_000;
    let mean = (0..n)
        .map(|_| sample_holding(&mut r, 10.0).unwrap())
        .sum::<f64>()
        / n as f64;
    assert!((mean - 10.0).abs() < 0.2, "mean {mean}");
    assert!(sample_holding(&mut r, 0.0).is_err());
}

#[test]
fn single_cluster_count_matches_poisson() {
    let w = WorkloadSpec::build(&params(1, 1.0, 1.0)).unwrap();
    let stream = merged_arrival_stream(&w, 10_000.0).unwrap();
    let expected = 20_000.0;
    let n = stream.len() as f64;
    assert!((n - expected).abs() < 3.0 * expected.sqrt(), "count {n}");
    assert!(stream
        .windows(2)
        .all(|p| p[0].arrival_time <= p[1].arrival_time));
    assert!(stream
        .iter()
        .all(|r| r.kind == SessionKind::Steady && r.class_id == 0));
}

#[test]
fn empty_cluster_list_gives_empty_stream() {
    let mut w = WorkloadSpec::build(&params(1, 1.0, 1.0)).unwrap();
    w.clusters.clear();
    assert!(merged_arrival_stream(&w, 100.0).unwrap().is_empty());
    assert!(merged_arrival_stream(&w, 0.0).is_err());
}

#[test]
fn two_clusters_superpose() {
    // request rates 2 and 6 per second
    let w = WorkloadSpec::build(&params(2, 1.0, 3.0)).unwrap();
    let horizon = 2_000.0;
    let stream = merged_arrival_stream(&w, horizon).unwrap();
    let total = 8.0 * horizon;
    assert!((stream.len() as f64 - total).abs() < 3.0 * total.sqrt());
    for (class, rate) in [(0, 2.0), (1, 6.0)] {
        let count = stream.iter().filter(|r| r.class_id == class).count() as f64;
        let want = rate * horizon;
        assert!(
            (count - want).abs() < 3.0 * want.sqrt(),
            "class {class}: {count} vs {want}"
        );
    }
}

#[test]
fn interactive_stream_adds_its_rate() {
    let mut p = params(2, 1.0, 1.0);
    p.interactive_rate = 1.5;
    let w = WorkloadSpec::build(&p).unwrap();
    assert!((w.total_rate() - 7.0).abs() < 1e-12);
    let stream = merged_arrival_stream(&w, 3_000.0).unwrap();
    let interactive = stream
        .iter()
        .filter(|r| r.kind == SessionKind::Interactive)
        .count() as f64;
    let want = 2.0 * 1.5 * 3_000.0;
    assert!((interactive - want).abs() < 3.0 * want.sqrt());
}

#[test]
fn stream_is_deterministic_per_seed() {
    let w = WorkloadSpec::build(&params(5, 1.0, 3.0)).unwrap();
    let a = merged_arrival_stream(&w, 200.0).unwrap();
    let b = merged_arrival_stream(&w, 200.0).unwrap();
    assert_eq!(a, b);
    let c: Vec<_> = ArrivalStream::new(&w, 200.0, w.seed + 1).unwrap().collect();
    assert_ne!(a, c);
}

/// Literal superposition: an independent exponential clock per cluster,
/// merged by time. Independent of the library's stream construction.
fn independent_clocks_gaps(rates: &[f64], horizon: f64, seed: u64) -> Vec<f64> {
    use rand::distributions::{Distribution, Open01};
    let mut r = rng(seed);
    let mut times = Vec::new();
    for &rate in rates {
        let mut t = 0.0;
        loop {
            let u: f64 = Open01.sample(&mut r);
            t += -u.ln() / rate;
            if t >= horizon {
                break;
            }
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);
    times.windows(2).map(|p| p[1] - p[0]).collect()
}

fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn merged_gaps_match_independent_clock_oracle() {
    let w = WorkloadSpec::build(&params(30, 1.0, 15.5)).unwrap();
    let rates: Vec<f64> = w.clusters.iter().map(|c| c.request_rate).collect();
    let horizon = 30.0;
    let stream = merged_arrival_stream(&w, horizon).unwrap();
    let ours: Vec<f64> = stream
        .windows(2)
        .map(|p| p[1].arrival_time - p[0].arrival_time)
        .collect();
    let oracle = independent_clocks_gaps(&rates, horizon, 77);
    let d = two_sample_ks(&ours, &oracle);
    let (n, m) = (ours.len() as f64, oracle.len() as f64);
    // two-sample critical value at alpha = 0.01
    let critical = 1.628 * ((n + m) / (n * m)).sqrt();
    assert!(d < critical, "D = {d}, critical {critical}");
}

#[test]
fn ks_helpers_behave() {
    let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
    let d = common::ks_statistic(&grid, |x| x);
    assert!(d <= 0.0005 + 1e-12);
    assert!(common::ks_p_value(d, grid.len()) > 0.99);
    assert!(common::ks_p_value(0.1, 10_000) < 1e-10);
    let x = [1.0, 2.0, 3.0, 4.0];
    assert!((common::spearman(&x, &[10.0, 20.0, 25.0, 70.0]) - 1.0).abs() < 1e-12);
    assert!((common::spearman(&x, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn holding_times_positive_and_finite(seed in any::<u64>(), clusters in 1usize..8, lo in 0.1f64..5.0) {
        let mut p = params(clusters, lo, lo * 3.0);
        p.seed = seed;
        p.min_hold = 0.01;
        p.max_hold = 0.5;
        let w = WorkloadSpec::build(&p).unwrap();
        for r in merged_arrival_stream(&w, 20.0).unwrap() {
            prop_assert!(r.holding_time > 0.0 && r.holding_time.is_finite());
            prop_assert!(r.arrival_time >= 0.0 && r.arrival_time < 20.0);
        }
    }
}
