use proptest::prelude::*;
use tbs_core::distribution::{exact_distribution, PhotonModel};
use tbs_core::matrix::haar_random_unitary;
use tbs_core::simulator::{simulate_event_log, SourceConfig};
use tbs_core::validation::{likelihood_ratio_test, row_norm_test, ValidationTrace};
use tbs_core::{OutputCombination, Timestamp, TransferMatrix};

fn sample(u: &TransferMatrix, inputs: &[usize], seed: u64, count: usize) -> tbs_core::EventLog {
    let d = exact_distribution(u, inputs, PhotonModel::Indistinguishable).unwrap();
    simulate_event_log(&d, &SourceConfig::new(1e4, seed), Timestamp::from_seconds(1.0))
        .unwrap()
        .truncated(count)
}

fn check_running(t: &ValidationTrace) {
    let mut acc = 0i64;
    for (k, (&d, &s)) in t.decisions.iter().zip(&t.running).enumerate() {
        acc += d as i64;
        assert_eq!(s, acc);
        assert!(s.unsigned_abs() as usize <= k + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn prefix_consistency(seed in 0u64..200, k in 1usize..200) {
        let u = haar_random_unitary(10, seed).unwrap();
        let log = sample(&u, &[0, 1, 2], seed, 200);
        for test in [row_norm_test, likelihood_ratio_test] {
            let full = test(&log, &u, &[0, 1, 2]).unwrap();
            let part = test(&log.truncated(k), &u, &[0, 1, 2]).unwrap();
            check_running(&full);
            prop_assert_eq!(&full.decisions[..part.len()], &part.decisions[..]);
            prop_assert_eq!(&full.running[..part.len()], &part.running[..]);
        }
    }

    #[test]
    fn global_phase_invariance(seed in 0u64..200, phase in 0.0f64..std::f64::consts::TAU) {
        let u = haar_random_unitary(8, seed).unwrap();
        let log = sample(&u, &[0, 3], seed, 100);
        let v = u.with_global_phase(phase);
        prop_assert_eq!(row_norm_test(&log, &u, &[0, 3]).unwrap(), row_norm_test(&log, &v, &[0, 3]).unwrap());
        prop_assert_eq!(
            likelihood_ratio_test(&log, &u, &[0, 3]).unwrap().decisions,
            likelihood_ratio_test(&log, &v, &[0, 3]).unwrap().decisions
        );
    }

    #[test]
    fn output_relabeling_invariance(seed in 0u64..200, rot in 1usize..8) {
        let m = 8;
        let u = haar_random_unitary(m, seed).unwrap();
        let log = sample(&u, &[1, 2], seed, 100);
        // output k of the relabeled matrix is output perm[k] of u
        let perm: Vec<usize> = (0..m).map(|k| (k + rot) % m).collect();
        let mut inverse = vec![0; m];
        for (k, &p) in perm.iter().enumerate() {
            inverse[p] = k;
        }
        let relabeled = u.permute_outputs(&perm).unwrap();
        let relog = log
            .map_modes(|c| OutputCombination::from_unsorted(c.modes().iter().map(|&j| inverse[j]).collect()))
            .unwrap();
        prop_assert_eq!(row_norm_test(&log, &u, &[1, 2]).unwrap(), row_norm_test(&relog, &relabeled, &[1, 2]).unwrap());
        let a = likelihood_ratio_test(&log, &u, &[1, 2]).unwrap();
        let b = likelihood_ratio_test(&relog, &relabeled, &[1, 2]).unwrap();
        prop_assert_eq!(a.decisions, b.decisions);
    }
}

#[test]
fn traces_separate_models_at_moderate_size() {
    let u = haar_random_unitary(12, 3).unwrap();
    let inputs = [0, 1, 2];
    let ind = sample(&u, &inputs, 3, 2000);
    let dist = exact_distribution(&u, &inputs, PhotonModel::Distinguishable).unwrap();
    let dist_log = simulate_event_log(&dist, &SourceConfig::new(1e4, 4), Timestamp::from_seconds(1.0))
        .unwrap()
        .truncated(2000);
    assert!(likelihood_ratio_test(&ind, &u, &inputs).unwrap().final_sum() > 0);
    assert!(likelihood_ratio_test(&dist_log, &u, &inputs).unwrap().final_sum() < 0);
}
