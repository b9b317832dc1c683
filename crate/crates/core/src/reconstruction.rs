//! Counting and timestamp reconstruction of output distributions.
//!
//! The timestamp estimator weights each combination by the inverse of a
//! characteristic arrival time `tau_i` built from its first `n_o` occurrences,
//! `p_i = tau_i^-1 / sum_j tau_j^-1`. Combinations whose implied occurrence
//! number `T / tau_i` disagrees with the observed count by more than the band
//! factor are discarded as singular points.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combination::OutputCombination;
use crate::distribution::{Distribution, Provenance};
use crate::error::{Error, Result};
use crate::simulator::{EventLog, Timestamp};

/// Default band factor `b` of the filter `N_a / b < N_tau < b N_a`.
pub const DEFAULT_BAND_FACTOR: f64 = 2.0;

/// All trigger times at which one combination was registered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccurrenceRecord {
    pub combination: OutputCombination,
    /// Increasing trigger times.
    pub timestamps: Vec<Timestamp>,
}

impl OccurrenceRecord {
    /// Observed occurrence count `N_a`.
    pub fn count(&self) -> usize {
        self.timestamps.len()
    }

    /// Characteristic time over the first `n_o` occurrences, in picoseconds.
    /// `None` if the combination occurred fewer than `n_o` times.
    pub fn characteristic_time(&self, n_o: usize, statistic: TimestampStatistic) -> Option<f64> {
        if n_o == 0 || self.timestamps.len() < n_o {
            return None;
        }
        let first = &self.timestamps[..n_o];
        Some(match statistic {
            TimestampStatistic::MeanInterval => first[n_o - 1].0 as f64 / n_o as f64,
            TimestampStatistic::MeanAbsolute => first.iter().map(|t| t.0 as f64).sum::<f64>() / n_o as f64,
            TimestampStatistic::NthArrival => first[n_o - 1].0 as f64,
        })
    }
}

/// Groups a log by combination, in colexicographic order.
pub fn occurrence_records(log: &EventLog) -> Vec<OccurrenceRecord> {
    let mut map: BTreeMap<&OutputCombination, Vec<Timestamp>> = BTreeMap::new();
    for e in log.events() {
        map.entry(&e.modes).or_default().push(e.tau);
    }
    map.into_iter()
        .map(|(c, timestamps)| OccurrenceRecord { combination: c.clone(), timestamps })
        .collect()
}

/// Histogram: occurrence count -> number of combinations with that count.
pub fn occurrence_census(log: &EventLog) -> BTreeMap<usize, usize> {
    let mut census = BTreeMap::new();
    for r in occurrence_records(log) {
        *census.entry(r.count()).or_insert(0) += 1;
    }
    census
}

/// `c_i = N_i / N` over the observed combinations.
pub fn counting_estimate(log: &EventLog) -> Result<Distribution> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let weights = occurrence_records(log)
        .into_iter()
        .map(|r| {
            let n = r.count() as f64;
            (r.combination, n)
        })
        .collect();
    Distribution::from_weights(log.m(), log.n(), Provenance::Counting, weights)
}

/// How the characteristic time of a combination is formed from its first
/// `n_o` trigger times `t_1 < ... < t_{n_o}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimestampStatistic {
    /// Mean inter-occurrence interval `t_{n_o} / n_o`; equals `t_1` for `n_o = 1`.
    #[default]
    MeanInterval,
    /// Arithmetic mean of the absolute times `(t_1 + ... + t_{n_o}) / n_o`.
    MeanAbsolute,
    /// The `n_o`-th arrival time alone.
    NthArrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimestampConfig {
    pub n_o: usize,
    pub statistic: TimestampStatistic,
    pub filter: bool,
    pub band_factor: f64,
}

impl TimestampConfig {
    pub fn new(n_o: usize) -> Self {
        Self {
            n_o,
            statistic: TimestampStatistic::default(),
            filter: true,
            band_factor: DEFAULT_BAND_FACTOR,
        }
    }

    pub fn without_filter(mut self) -> Self {
        self.filter = false;
        self
    }
}

/// A combination that reached `n_o` occurrences together with its filter verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredRecord {
    pub combination: OutputCombination,
    pub count: usize,
    pub tau_ps: f64,
    /// `T / tau`
    pub implied_count: f64,
    pub kept: bool,
}

/// Strict band test `N_a / b < T / tau < b N_a`.
pub fn in_band(count: usize, tau_ps: f64, total_ps: f64, band_factor: f64) -> bool {
    let implied = total_ps / tau_ps;
    let n_a = count as f64;
    n_a / band_factor < implied && implied < band_factor * n_a
}

/// Partitions `(record, tau)` pairs into kept and singular ones.
pub fn reshape_filter(
    records: &[(OccurrenceRecord, f64)],
    total: Timestamp,
    band_factor: f64,
) -> Result<Vec<ScoredRecord>> {
    if total.0 == 0 {
        return Err(Error::Domain("total time must be positive".into()));
    }
    if !(band_factor > 1.0) {
        return Err(Error::Domain(format!("band factor {band_factor} must exceed 1")));
    }
    let t = total.0 as f64;
    Ok(records
        .iter()
        .map(|(r, tau)| ScoredRecord {
            combination: r.combination.clone(),
            count: r.count(),
            tau_ps: *tau,
            implied_count: t / tau,
            kept: in_band(r.count(), *tau, t, band_factor),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub estimate: Distribution,
    pub kept: usize,
    /// Singular points removed by the filter.
    pub discarded: usize,
    /// Observed combinations with fewer than `n_o` occurrences.
    pub below_threshold: usize,
    pub config: TimestampConfig,
    pub total_time: Timestamp,
    /// Events actually consulted: `n_o` for every combination that reached `n_o`.
    pub events_used: usize,
    pub records: Vec<ScoredRecord>,
}

impl ReconstructionReport {
    /// `discarded / (kept + discarded)`.
    pub fn discarded_fraction(&self) -> f64 {
        let total = self.kept + self.discarded;
        if total == 0 {
            0.0
        } else {
            self.discarded as f64 / total as f64
        }
    }

    /// Heavy-tailed regime: with one occurrence the inverse time has no finite mean.
    pub fn high_variance(&self) -> bool {
        self.config.n_o == 1
    }

    pub fn singular(&self) -> impl Iterator<Item = &OutputCombination> {
        self.records.iter().filter(|r| !r.kept).map(|r| &r.combination)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ReportJson {
            n_o: self.config.n_o,
            statistic: self.config.statistic,
            filter: self.config.filter,
            band_factor: self.config.band_factor,
            total_time_ps: self.total_time.0,
            kept: self.kept,
            discarded: self.discarded,
            discarded_fraction: self.discarded_fraction(),
            below_threshold: self.below_threshold,
            events_used: self.events_used,
            high_variance: self.high_variance(),
            singular: self.singular().cloned().collect(),
            estimate: self.estimate.to_jsonl_string()?,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

#[derive(Serialize)]
struct ReportJson {
    n_o: usize,
    statistic: TimestampStatistic,
    filter: bool,
    band_factor: f64,
    total_time_ps: u64,
    kept: usize,
    discarded: usize,
    discarded_fraction: f64,
    below_threshold: usize,
    events_used: usize,
    high_variance: bool,
    singular: Vec<OutputCombination>,
    estimate: String,
}

/// Timestamp reconstruction over `log` with the given configuration.
pub fn timestamp_estimate(log: &EventLog, config: TimestampConfig) -> Result<ReconstructionReport> {
    if config.n_o == 0 {
        return Err(Error::Domain("n_o must be at least 1".into()));
    }
    let records = occurrence_records(log);
    let observed = records.len();
    let scored_input: Vec<(OccurrenceRecord, f64)> = records
        .into_par_iter()
        .filter_map(|r| {
            let tau = r.characteristic_time(config.n_o, config.statistic)?;
            Some((r, tau))
        })
        .collect();
    if scored_input.is_empty() {
        return Err(Error::EmptyEstimate { n_o: config.n_o });
    }
    let below_threshold = observed - scored_input.len();
    let events_used = scored_input.len() * config.n_o;
    let records = if config.filter {
        reshape_filter(&scored_input, log.duration(), config.band_factor)?
    } else {
        let t = log.duration().0 as f64;
        scored_input
            .iter()
            .map(|(r, tau)| ScoredRecord {
                combination: r.combination.clone(),
                count: r.count(),
                tau_ps: *tau,
                implied_count: t / tau,
                kept: true,
            })
            .collect()
    };
    let weights: Vec<(OutputCombination, f64)> = records
        .iter()
        .filter(|r| r.kept)
        .map(|r| (r.combination.clone(), 1.0 / r.tau_ps))
        .collect();
    let kept = weights.len();
    if kept == 0 {
        return Err(Error::EmptyEstimate { n_o: config.n_o });
    }
    let estimate = Distribution::from_weights(log.m(), log.n(), Provenance::Timestamp, weights)?;
    Ok(ReconstructionReport {
        estimate,
        kept,
        discarded: records.len() - kept,
        below_threshold,
        config,
        total_time: log.duration(),
        events_used,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::Event;

    fn combo(v: &[usize]) -> OutputCombination {
        OutputCombination::new(v.to_vec()).unwrap()
    }

    fn log(m: usize, n: usize, t: u64, events: &[(u64, &[usize])]) -> EventLog {
        let events = events
            .iter()
            .map(|(tau, modes)| Event { tau: Timestamp(*tau), modes: combo(modes) })
            .collect();
        EventLog::new(m, n, Timestamp(t), events).unwrap()
    }

    #[test]
    fn counting_three_to_one() {
        let l = log(3, 2, 100, &[(1, &[0, 1]), (2, &[0, 1]), (3, &[1, 2]), (4, &[0, 1])]);
        let d = counting_estimate(&l).unwrap();
        assert_eq!(d.get(&combo(&[0, 1])), 0.75);
        assert_eq!(d.get(&combo(&[1, 2])), 0.25);
        assert_eq!(d.get(&combo(&[0, 2])), 0.0);
        let empty = log(3, 2, 100, &[]);
        assert!(matches!(counting_estimate(&empty), Err(Error::EmptyLog)));
    }

    #[test]
    fn first_seen_one_and_two_seconds() {
        let s = 1_000_000_000_000u64;
        let l = log(3, 2, 3 * s, &[(s, &[0, 1]), (2 * s, &[1, 2])]);
        let r = timestamp_estimate(&l, TimestampConfig::new(1).without_filter()).unwrap();
        assert!((r.estimate.get(&combo(&[0, 1])) - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.estimate.get(&combo(&[1, 2])) - 1.0 / 3.0).abs() < 1e-15);
        assert!(r.high_variance());
    }

    #[test]
    fn single_combination_is_point_mass() {
        let l = log(3, 2, 1000, &[(777, &[0, 2])]);
        let r = timestamp_estimate(&l, TimestampConfig::new(1).without_filter()).unwrap();
        assert_eq!(r.estimate.get(&combo(&[0, 2])), 1.0);
    }

    #[test]
    fn no_combination_reaches_threshold() {
        let l = log(3, 2, 1000, &[(1, &[0, 1]), (2, &[0, 2])]);
        assert!(matches!(
            timestamp_estimate(&l, TimestampConfig::new(2)),
            Err(Error::EmptyEstimate { n_o: 2 })
        ));
    }

    #[test]
    fn band_centre_and_outside() {
        let t = 1_000_000.0;
        assert!(in_band(10, t / 10.0, t, 2.0));
        assert!(!in_band(10, t / 30.0, t, 2.0));
        // strict edges
        assert!(!in_band(10, t / 20.0, t, 2.0));
        assert!(!in_band(10, t / 5.0, t, 2.0));
    }

    #[test]
    fn statistics_of_first_occurrences() {
        let r = OccurrenceRecord {
            combination: combo(&[0, 1]),
            timestamps: vec![Timestamp(10), Timestamp(30), Timestamp(60), Timestamp(1000)],
        };
        assert_eq!(r.characteristic_time(3, TimestampStatistic::MeanInterval), Some(20.0));
        assert_eq!(r.characteristic_time(3, TimestampStatistic::MeanAbsolute), Some(100.0 / 3.0));
        assert_eq!(r.characteristic_time(3, TimestampStatistic::NthArrival), Some(60.0));
        assert_eq!(r.characteristic_time(5, TimestampStatistic::MeanInterval), None);
        assert_eq!(r.characteristic_time(1, TimestampStatistic::MeanInterval), Some(10.0));
    }

    #[test]
    fn report_accounting() {
        // [0,1]: 4 regular occurrences; [0,2]: 2 early occurrences then silence
        let l = log(
            3,
            2,
            400,
            &[(1, &[0, 2]), (2, &[0, 2]), (100, &[0, 1]), (200, &[0, 1]), (300, &[0, 1]), (350, &[1, 2]), (399, &[0, 1])],
        );
        let r = timestamp_estimate(&l, TimestampConfig::new(2)).unwrap();
        assert_eq!(r.below_threshold, 1);
        assert_eq!(r.kept + r.discarded, 2);
        assert_eq!(r.discarded, 1);
        assert_eq!(r.singular().cloned().collect::<Vec<_>>(), vec![combo(&[0, 2])]);
        assert_eq!(r.estimate.get(&combo(&[0, 1])), 1.0);
        assert_eq!(r.events_used, 4);
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(json["discarded"], 1);
        assert!(json["estimate"].as_str().unwrap().lines().count() >= 2);
    }

    #[test]
    fn census_counts() {
        let l = log(3, 2, 100, &[(1, &[0, 1]), (2, &[0, 1]), (3, &[1, 2])]);
        let c = occurrence_census(&l);
        assert_eq!(c, BTreeMap::from([(1, 1), (2, 1)]));
        assert!(occurrence_census(&log(3, 2, 100, &[])).is_empty());
    }
}
