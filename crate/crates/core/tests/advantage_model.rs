use num_bigint::BigUint;
use proptest::prelude::*;
use tbs_core::advantage::{
    advantage_table, advantage_threshold, binomial_exact, computational_steps, equivalent_photon_number,
    required_efficiency, sampling_rate, write_table, DEFAULT_PUMP_RATE_HZ,
};

#[test]
fn steps_strictly_increase_under_balanced_policy() {
    let steps: Vec<BigUint> = (1..=60).map(|n| computational_steps(n, 2 * n).unwrap()).collect();
    assert!(steps.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn binomials_exact_up_to_sixty() {
    // C(2n, n) = sum_k C(n, k)^2
    for n in 1..=60 {
        let vandermonde: BigUint = (0..=n).map(|k| binomial_exact(n, k).pow(2)).sum();
        assert_eq!(binomial_exact(2 * n, n), vandermonde);
    }
}

#[test]
fn advantage_flag_matches_threshold() {
    let rows = advantage_table(10..=30, &[0.5, 0.9], DEFAULT_PUMP_RATE_HZ, 100.0).unwrap();
    assert_eq!(rows.len(), 21 * 2 * 2);
    let threshold = advantage_threshold();
    for r in &rows {
        assert_eq!(r.advantage, r.steps >= threshold);
    }
    let mut out = Vec::new();
    write_table(&rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n,m,eta,SR,steps,log10_steps,advantage_flag,protocol");
    assert_eq!(text.lines().count(), rows.len() + 1);
}

#[test]
fn equivalent_n_nondecreasing_in_speedup() {
    let mut previous = 0;
    for speedup in [1.0, 2.0, 10.0, 100.0, 1e3, 1e4, 1e6] {
        let e = equivalent_photon_number(15, 0.6, DEFAULT_PUMP_RATE_HZ, speedup).unwrap();
        assert!(e.n_prime >= previous);
        assert!(e.n_prime_continuous >= e.n_prime as f64 - 1e-9);
        assert!(e.n_prime_continuous < e.n_prime as f64 + 1.0);
        previous = e.n_prime;
    }
}

proptest! {
    #[test]
    fn round_trip(n in 1usize..=40, extra in 0usize..40, eta in 0.01f64..=1.0) {
        let m = n + extra;
        let sr = sampling_rate(n, m, eta, DEFAULT_PUMP_RATE_HZ).unwrap();
        let back = required_efficiency(n, m, sr, DEFAULT_PUMP_RATE_HZ).unwrap();
        prop_assert!((back - eta).abs() <= 1e-12);
    }
}
