use std::io::BufReader;

use tbs_core::distribution::{distribution_metrics, exact_distribution, PhotonModel};
use tbs_core::matrix::haar_random_unitary;
use tbs_core::reconstruction::counting_estimate;
use tbs_core::simulator::{interarrival_gaps, interarrival_histogram, interval_statistics, simulate_event_log, SourceConfig};
use tbs_core::stats::ks_exponential;
use tbs_core::{EventLog, Timestamp};

#[test]
fn counting_converges_to_exact_distribution() {
    let u = haar_random_unitary(10, 77).unwrap();
    let exact = exact_distribution(&u, &[0, 1], PhotonModel::Indistinguishable).unwrap();
    let log = simulate_event_log(&exact, &SourceConfig::new(1e6, 77), Timestamp::from_seconds(1.0)).unwrap();
    assert!(log.len() > 990_000);
    let counting = counting_estimate(&log).unwrap();
    let tvd = distribution_metrics(&counting, &exact).unwrap().tvd;
    assert!(tvd <= 0.01, "TVD {tvd}");
}

#[test]
fn thinning_matches_product_of_efficiencies() {
    let u = haar_random_unitary(6, 5).unwrap();
    let exact = exact_distribution(&u, &[0, 1], PhotonModel::Distinguishable).unwrap();
    let eff = vec![0.9, 0.5, 0.7, 1.0, 0.3, 0.8];
    let survival: f64 = exact
        .entries()
        .iter()
        .map(|(c, p)| p * c.modes().iter().map(|&k| eff[k]).product::<f64>())
        .sum();
    let rate = 2e5;
    let cfg = SourceConfig { rate_hz: rate, efficiencies: Some(eff), seed: 3 };
    let log = simulate_event_log(&exact, &cfg, Timestamp::from_seconds(1.0)).unwrap();
    let expected = rate * survival;
    let sigma = expected.sqrt();
    assert!((log.len() as f64 - expected).abs() < 5.0 * sigma, "{} vs {expected}", log.len());
    // a thinned Poisson process is still Poisson with the reduced rate
    let gaps: Vec<f64> = interarrival_gaps(&log, None).into_iter().map(|g| g as f64).collect();
    assert!(ks_exponential(&gaps, 1e12 / expected).passes(0.001));
}

#[test]
fn same_seed_same_log() {
    let u = haar_random_unitary(8, 1).unwrap();
    let d = exact_distribution(&u, &[0, 1, 2], PhotonModel::Indistinguishable).unwrap();
    let cfg = SourceConfig::new(5e3, 42);
    let a = simulate_event_log(&d, &cfg, Timestamp::from_seconds(2.0)).unwrap();
    let b = simulate_event_log(&d, &cfg, Timestamp::from_seconds(2.0)).unwrap();
    assert_eq!(a, b);
    let c = simulate_event_log(&d, &SourceConfig::new(5e3, 43), Timestamp::from_seconds(2.0)).unwrap();
    assert_ne!(a.events(), c.events());
}

#[test]
fn jsonl_round_trip() {
    let u = haar_random_unitary(5, 2).unwrap();
    let d = exact_distribution(&u, &[1, 3], PhotonModel::Indistinguishable).unwrap();
    let log = simulate_event_log(&d, &SourceConfig::new(1e3, 9), Timestamp::from_seconds(1.0)).unwrap();
    let mut buf = Vec::new();
    log.write_jsonl(&mut buf).unwrap();
    let back = EventLog::read_jsonl(BufReader::new(buf.as_slice())).unwrap();
    assert_eq!(back, log);
}

#[test]
fn per_outcome_gaps_are_exponential_with_outcome_rate() {
    let u = haar_random_unitary(4, 8).unwrap();
    let d = exact_distribution(&u, &[0, 1], PhotonModel::Indistinguishable).unwrap();
    let rate = 1e4;
    let log = simulate_event_log(&d, &SourceConfig::new(rate, 8), Timestamp::from_seconds(5.0)).unwrap();
    let (combo, p) = d.entries().iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let gaps: Vec<f64> = interarrival_gaps(&log, Some(combo)).into_iter().map(|g| g as f64).collect();
    assert!(ks_exponential(&gaps, 1e12 / (rate * p)).passes(0.001));
    let hist = interarrival_histogram(&log, Some(combo), 20);
    assert_eq!(hist.counts.iter().sum::<u64>() as usize, hist.samples);
    // the first bin of an exponential histogram is its largest
    assert_eq!(hist.counts.iter().max(), hist.counts.first());
}

#[test]
fn interval_counts_sum_to_log_length() {
    let u = haar_random_unitary(6, 4).unwrap();
    let d = exact_distribution(&u, &[0, 1], PhotonModel::Indistinguishable).unwrap();
    let log = simulate_event_log(&d, &SourceConfig::new(500.0, 4), Timestamp::from_seconds(100.0)).unwrap();
    let stats = interval_statistics(&log, 100).unwrap();
    assert_eq!(stats.counts.iter().sum::<u64>() as usize, log.len());
    assert!((stats.dispersion() - 1.0).abs() < 0.35);
}
