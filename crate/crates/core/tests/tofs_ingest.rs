use std::collections::BTreeMap;
use std::fs;

use proptest::prelude::*;
use tbs_core::distribution::{exact_distribution, PhotonModel};
use tbs_core::matrix::haar_random_unitary;
use tbs_core::simulator::{simulate_event_log, SourceConfig};
use tbs_core::tofs::{
    calibrate_delays, emit_tofs_streams, extract_coincidences, parse_streams, ChannelId, CoincidenceWindow, TofsCapture,
    TofsLayout,
};
use tbs_core::{Error, EventLog, Timestamp};

fn planted(m: usize, n: usize, rate: f64, seconds: f64, seed: u64) -> EventLog {
    let u = haar_random_unitary(m, seed).unwrap();
    let inputs: Vec<usize> = (0..n).collect();
    let d = exact_distribution(&u, &inputs, PhotonModel::Indistinguishable).unwrap();
    simulate_event_log(&d, &SourceConfig::new(rate, seed), Timestamp::from_seconds(seconds)).unwrap()
}

fn declared(capture: &TofsCapture) -> BTreeMap<ChannelId, i64> {
    capture.detection_channels().map(|c| (c, capture.declared_delays[&c])).collect()
}

#[test]
fn files_round_trip() {
    let log = planted(6, 2, 1e4, 0.2, 1);
    let layout = TofsLayout { jitter_ps: 20.0, dark_rate_hz: 1e3, trigger_dark_rate_hz: 1e2, seed: 5, ..TofsLayout::noiseless(6, vec![100; 6]) };
    let capture = emit_tofs_streams(&log, &layout).unwrap();
    let dir = tempfile::tempdir().unwrap();
    capture.write_dir(dir.path()).unwrap();
    let back = parse_streams(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(back, capture);
}

#[test]
fn unsorted_file_reports_line() {
    let log = planted(3, 1, 1e3, 0.05, 2);
    let capture = emit_tofs_streams(&log, &TofsLayout::noiseless(3, vec![])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    capture.write_dir(dir.path()).unwrap();
    fs::write(dir.path().join("ch1.txt"), "10\n20\n15\n").unwrap();
    let err = parse_streams(&dir.path().join("manifest.json")).unwrap_err();
    assert!(matches!(err, Error::Integrity { line: 3, tag: 15, previous: 20 }), "{err:?}");
}

#[test]
fn trigger_channel_must_not_collide() {
    let log = planted(4, 2, 1e3, 0.01, 3);
    assert!(emit_tofs_streams(&log, &TofsLayout::noiseless(2, vec![])).is_err());
    assert!(emit_tofs_streams(&log, &TofsLayout::noiseless(9, vec![0; 3])).is_err());
}

#[test]
fn accidental_rate_from_dark_counts() {
    // no photon events: every extracted coincidence is accidental
    let m = 4;
    let empty = EventLog::new(m, 1, Timestamp::from_seconds(1.0), Vec::new()).unwrap();
    let dark = 5e5;
    let trigger_rate = 1e5;
    let window = CoincidenceWindow::default();
    let layout = TofsLayout { dark_rate_hz: dark, trigger_dark_rate_hz: trigger_rate, seed: 11, ..TofsLayout::noiseless(m as u32, vec![]) };
    let capture = emit_tofs_streams(&empty, &layout).unwrap();
    let log = extract_coincidences(&capture, m as u32, &declared(&capture), window, 1).unwrap();
    // P(a channel has >= 1 tag in the window) = 1 - exp(-r w); exactly one of m channels fires
    let p = 1.0 - (-dark * window.width_ps as f64 * 1e-12).exp();
    let triggers = capture.streams[&(m as u32)].len() as f64;
    let expected = triggers * m as f64 * p * (1.0 - p).powi(m as i32 - 1);
    let got = log.len() as f64;
    assert!((got - expected).abs() <= 0.2 * expected, "{got} accidentals, expected {expected}");
}

#[test]
fn extraction_is_monotone_in_window_on_clean_data() {
    let log = planted(8, 2, 1e4, 0.1, 4);
    let capture = emit_tofs_streams(&log, &TofsLayout { jitter_ps: 100.0, seed: 3, ..TofsLayout::noiseless(8, vec![0; 8]) }).unwrap();
    let delays = declared(&capture);
    let mut previous = 0;
    for width in [0, 50, 100, 200, 400, 800, 1600, 3200] {
        let got = extract_coincidences(&capture, 8, &delays, CoincidenceWindow::symmetric(width), 2).unwrap().len();
        assert!(got >= previous, "window {width}: {got} < {previous}");
        previous = got;
    }
    assert_eq!(previous, log.len());
}

#[test]
fn pure_dark_streams_fail_calibration() {
    let empty = EventLog::new(2, 1, Timestamp::from_seconds(0.01), Vec::new()).unwrap();
    let layout = TofsLayout { dark_rate_hz: 100.0, trigger_dark_rate_hz: 100.0, seed: 1, ..TofsLayout::noiseless(2, vec![]) };
    let capture = emit_tofs_streams(&empty, &layout).unwrap();
    if capture.streams[&2].is_empty() {
        assert!(calibrate_delays(&capture, 2, 5000, 50).is_err());
    } else {
        let report = calibrate_delays(&capture, 2, 5000, 50).unwrap();
        assert!(matches!(report.into_delays(), Err(Error::CalibrationFailed { .. })));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn delay_shift_equivariance(seed in 0u64..500, shift in 0u64..20_000) {
        let log = planted(5, 2, 2e4, 0.02, seed);
        let base = emit_tofs_streams(&log, &TofsLayout::noiseless(5, vec![0; 5])).unwrap();
        let moved = emit_tofs_streams(&log, &TofsLayout::noiseless(5, vec![shift; 5])).unwrap();
        let window = CoincidenceWindow::default();
        let a = extract_coincidences(&base, 5, &declared(&base), window, 2).unwrap();
        let b = extract_coincidences(&moved, 5, &declared(&moved), window, 2).unwrap();
        prop_assert_eq!(a.events(), b.events());
        prop_assert_eq!(a.events(), log.events());
    }
}
