//! Marked Poisson simulation of detection events on an integer picosecond clock.

use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution as _, Exp};
use serde::{Deserialize, Serialize};

use crate::combination::OutputCombination;
use crate::distribution::Distribution;
use crate::error::{Error, Result};

pub const PS_PER_SECOND: f64 = 1e12;

/// Picoseconds since the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn from_seconds(s: f64) -> Self {
        Timestamp((s * PS_PER_SECOND).round() as u64)
    }

    pub fn ps(self) -> u64 {
        self.0
    }

    pub fn seconds(self) -> f64 {
        self.0 as f64 / PS_PER_SECOND
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "tau_ps")]
    pub tau: Timestamp,
    pub modes: OutputCombination,
}

/// Time-ordered coincidence events over `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    m: usize,
    n: usize,
    duration: Timestamp,
    seed: Option<u64>,
    rate_hz: Option<f64>,
    events: Vec<Event>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LogHeader {
    m: usize,
    n: usize,
    #[serde(rename = "T_ps")]
    duration_ps: u64,
    seed: Option<u64>,
    rate: Option<f64>,
}

impl EventLog {
    /// Validates ordering, range and shape of `events`.
    pub fn new(m: usize, n: usize, duration: Timestamp, events: Vec<Event>) -> Result<Self> {
        if m == 0 || n == 0 || n > m {
            return Err(Error::InvalidDimension(format!("event log with m={m}, n={n}")));
        }
        let mut prev = 0u64;
        for (i, e) in events.iter().enumerate() {
            if e.tau.0 == 0 || (i > 0 && e.tau.0 <= prev) {
                return Err(Error::Domain(format!(
                    "event {i} at {} ps breaks strict ordering",
                    e.tau.0
                )));
            }
            if e.tau > duration {
                return Err(Error::Domain(format!(
                    "event {i} at {} ps after run end {} ps",
                    e.tau.0, duration.0
                )));
            }
            if e.modes.len() != n {
                return Err(Error::DimensionMismatch(format!("event {i} has {} modes, expected {n}", e.modes.len())));
            }
            if e.modes.max_mode() >= m {
                return Err(Error::IndexOutOfRange { index: e.modes.max_mode(), bound: m });
            }
            prev = e.tau.0;
        }
        Ok(Self {
            m,
            n,
            duration,
            seed: None,
            rate_hz: None,
            events,
        })
    }

    pub fn with_metadata(mut self, seed: Option<u64>, rate_hz: Option<f64>) -> Self {
        self.seed = seed;
        self.rate_hz = rate_hz;
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn duration(&self) -> Timestamp {
        self.duration
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn rate_hz(&self) -> Option<f64> {
        self.rate_hz
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The first `k` events, same duration.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            m: self.m,
            n: self.n,
            duration: self.duration,
            seed: self.seed,
            rate_hz: self.rate_hz,
            events: self.events[..k.min(self.events.len())].to_vec(),
        }
    }

    /// Applies `f` to every event's combination (e.g. a mode relabeling).
    pub fn map_modes<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&OutputCombination) -> Result<OutputCombination>,
    {
        let events = self
            .events
            .iter()
            .map(|e| Ok(Event { tau: e.tau, modes: f(&e.modes)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { events, ..self.clone() })
    }

    /// Multiplies every timestamp and the duration by `factor`.
    pub fn scaled(&self, factor: u64) -> Result<Self> {
        let scale = |t: Timestamp| {
            t.0.checked_mul(factor)
                .map(Timestamp)
                .ok_or_else(|| Error::Domain("timestamp overflow while scaling".into()))
        };
        let events = self
            .events
            .iter()
            .map(|e| Ok(Event { tau: scale(e.tau)?, modes: e.modes.clone() }))
            .collect::<Result<Vec<_>>>()?;
        let log = Self::new(self.m, self.n, scale(self.duration)?, events)?;
        Ok(log.with_metadata(self.seed, self.rate_hz))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = LogHeader {
            m: self.m,
            n: self.n,
            duration_ps: self.duration.0,
            seed: self.seed,
            rate: self.rate_hz,
        };
        serde_json::to_writer(&mut out, &header)?;
        writeln!(out)?;
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: LogHeader = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line?)?,
            None => return Err(Error::Parse { line: 1, message: "missing header".into() }),
        };
        let mut events = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self::new(header.m, header.n, Timestamp(header.duration_ps), events)?
            .with_metadata(header.seed, header.rate))
    }
}

/// Source parameters for [`simulate_event_log`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Rate of the underlying Poisson process before efficiency thinning, events per second.
    pub rate_hz: f64,
    /// Per-output-mode detection efficiency in (0, 1]; `None` means all ones.
    pub efficiencies: Option<Vec<f64>>,
    pub seed: u64,
}

impl SourceConfig {
    pub fn new(rate_hz: f64, seed: u64) -> Self {
        Self { rate_hz, efficiencies: None, seed }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::Domain(format!("rate {} must be positive", self.rate_hz)));
        }
        if let Some(eff) = &self.efficiencies {
            if eff.len() != m {
                return Err(Error::DimensionMismatch(format!("{} efficiencies for {m} modes", eff.len())));
            }
            if let Some(bad) = eff.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
                return Err(Error::Domain(format!("efficiency {bad} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Homogeneous Poisson arrivals over `[0, duration]`, each marked with a
/// combination drawn from `dist` and kept with probability equal to the product
/// of its modes' efficiencies.
///
/// Gaps are drawn in seconds and rounded to whole picoseconds; a gap that
/// rounds to zero is redrawn so timestamps stay strictly increasing.
pub fn simulate_event_log(dist: &Distribution, cfg: &SourceConfig, duration: Timestamp) -> Result<EventLog> {
    cfg.validate(dist.m())?;
    if duration.0 == 0 {
        return Err(Error::Domain("run duration must be positive".into()));
    }
    let support: Vec<&(OutputCombination, f64)> = dist.support().collect();
    if support.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let sampler = WeightedIndex::new(support.iter().map(|(_, p)| *p))
        .map_err(|e| Error::Domain(format!("cannot sample distribution: {e}")))?;
    let survival: Option<Vec<f64>> = cfg.efficiencies.as_ref().map(|eff| {
        support
            .iter()
            .map(|(c, _)| c.modes().iter().map(|&k| eff[k]).product())
            .collect()
    });
    let gaps = Exp::new(cfg.rate_hz).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    let mut events = Vec::new();
    let mut now = 0u64;
    loop {
        let gap = loop {
            let g = (gaps.sample(&mut rng) * PS_PER_SECOND).round();
            if g >= 1.0 {
                break g;
            }
        };
        if gap > (duration.0 - now) as f64 {
            break;
        }
        now += gap as u64;
        let k = sampler.sample(&mut rng);
        if let Some(surv) = &survival {
            if rng.random::<f64>() >= surv[k] {
                continue;
            }
        }
        events.push(Event {
            tau: Timestamp(now),
            modes: support[k].0.clone(),
        });
    }
    Ok(EventLog::new(dist.m(), dist.n(), duration, events)?.with_metadata(Some(cfg.seed), Some(cfg.rate_hz)))
}

/// Events per equal-width time bin and their moments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalStatistics {
    pub counts: Vec<u64>,
    pub mean: f64,
    /// Population variance of the per-bin counts.
    pub variance: f64,
}

impl IntervalStatistics {
    pub fn dispersion(&self) -> f64 {
        if self.mean == 0.0 {
            f64::NAN
        } else {
            self.variance / self.mean
        }
    }
}

/// Splits `[0, T]` into `bins` equal intervals and counts events in each.
pub fn interval_statistics(log: &EventLog, bins: usize) -> Result<IntervalStatistics> {
    if bins == 0 {
        return Err(Error::Domain("need at least one bin".into()));
    }
    let mut counts = vec![0u64; bins];
    let total = log.duration.0 as u128;
    for e in &log.events {
        let idx = ((e.tau.0 as u128 * bins as u128) / total.max(1)) as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    Ok(IntervalStatistics {
        mean: crate::stats::mean(&as_f),
        variance: crate::stats::population_variance(&as_f),
        counts,
    })
}

/// Gaps between successive events, optionally restricted to one combination.
pub fn interarrival_gaps(log: &EventLog, outcome: Option<&OutputCombination>) -> Vec<u64> {
    let times: Vec<u64> = log
        .events
        .iter()
        .filter(|e| outcome.is_none_or(|o| &e.modes == o))
        .map(|e| e.tau.0)
        .collect();
    times.windows(2).map(|w| w[1] - w[0]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapHistogram {
    pub bin_width_ps: u64,
    pub counts: Vec<u64>,
    pub samples: usize,
    pub mean_gap_ps: f64,
}

/// Histogram of successive gaps with `bins` equal bins spanning the largest gap.
pub fn interarrival_histogram(log: &EventLog, outcome: Option<&OutputCombination>, bins: usize) -> GapHistogram {
    let gaps = interarrival_gaps(log, outcome);
    let bins = bins.max(1);
    let max = gaps.iter().copied().max().unwrap_or(0);
    if gaps.is_empty() {
        return GapHistogram { bin_width_ps: 0, counts: vec![], samples: 0, mean_gap_ps: 0.0 };
    }
    let width = (max / bins as u64 + 1).max(1);
    let mut counts = vec![0u64; bins];
    for &g in &gaps {
        counts[((g / width) as usize).min(bins - 1)] += 1;
    }
    GapHistogram {
        bin_width_ps: width,
        counts,
        samples: gaps.len(),
        mean_gap_ps: gaps.iter().map(|&g| g as f64).sum::<f64>() / gaps.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{uniform_distribution, Provenance};

    fn point_mass() -> Distribution {
        let c = OutputCombination::new(vec![0, 1]).unwrap();
        Distribution::from_weights(3, 2, Provenance::ExactIndist, vec![(c, 1.0)]).unwrap()
    }

    #[test]
    fn tiny_expected_count_is_usually_empty() {
        let dist = point_mass();
        let empty = (0..100)
            .filter(|&s| {
                simulate_event_log(&dist, &SourceConfig::new(0.01, s), Timestamp::from_seconds(1.0))
                    .unwrap()
                    .is_empty()
            })
            .count();
        assert!(empty >= 95, "{empty}");
    }

    #[test]
    fn seed_determinism() {
        let dist = uniform_distribution(5, 2).unwrap();
        let cfg = SourceConfig::new(1000.0, 42);
        let a = simulate_event_log(&dist, &cfg, Timestamp::from_seconds(2.0)).unwrap();
        let b = simulate_event_log(&dist, &cfg, Timestamp::from_seconds(2.0)).unwrap();
        assert_eq!(a, b);
        let c = simulate_event_log(&dist, &SourceConfig::new(1000.0, 43), Timestamp::from_seconds(2.0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_log_interval_statistics() {
        let log = EventLog::new(3, 2, Timestamp(1000), vec![]).unwrap();
        let st = interval_statistics(&log, 10).unwrap();
        assert_eq!(st.counts, vec![0; 10]);
        assert_eq!(st.mean, 0.0);
        assert!(interval_statistics(&log, 0).is_err());
    }

    #[test]
    fn last_instant_lands_in_last_bin() {
        let c = OutputCombination::new(vec![0, 1]).unwrap();
        let log = EventLog::new(
            3,
            2,
            Timestamp(100),
            vec![Event { tau: Timestamp(1), modes: c.clone() }, Event { tau: Timestamp(100), modes: c }],
        )
        .unwrap();
        let st = interval_statistics(&log, 4).unwrap();
        assert_eq!(st.counts, vec![1, 0, 0, 1]);
    }

    #[test]
    fn single_event_has_no_gaps() {
        let c = OutputCombination::new(vec![0, 1]).unwrap();
        let log = EventLog::new(3, 2, Timestamp(100), vec![Event { tau: Timestamp(5), modes: c }]).unwrap();
        assert!(interarrival_gaps(&log, None).is_empty());
        assert_eq!(interarrival_histogram(&log, None, 10).samples, 0);
        let other = OutputCombination::new(vec![1, 2]).unwrap();
        assert!(interarrival_gaps(&log, Some(&other)).is_empty());
    }

    #[test]
    fn log_invariants_enforced() {
        let c = OutputCombination::new(vec![0, 1]).unwrap();
        let ev = |t| Event { tau: Timestamp(t), modes: c.clone() };
        assert!(EventLog::new(3, 2, Timestamp(100), vec![ev(5), ev(5)]).is_err());
        assert!(EventLog::new(3, 2, Timestamp(100), vec![ev(0)]).is_err());
        assert!(EventLog::new(3, 2, Timestamp(100), vec![ev(101)]).is_err());
        assert!(EventLog::new(2, 3, Timestamp(100), vec![]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dist = uniform_distribution(4, 2).unwrap();
        let log = simulate_event_log(&dist, &SourceConfig::new(50.0, 3), Timestamp::from_seconds(1.0)).unwrap();
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"m\":4,\"n\":2,\"T_ps\":1000000000000,\"seed\":3,\"rate\":50.0}"));
        let back = EventLog::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn invalid_source_configs() {
        let dist = uniform_distribution(3, 2).unwrap();
        let t = Timestamp::from_seconds(1.0);
        assert!(simulate_event_log(&dist, &SourceConfig::new(0.0, 1), t).is_err());
        let mut cfg = SourceConfig::new(1.0, 1);
        cfg.efficiencies = Some(vec![1.0, 0.0, 1.0]);
        assert!(simulate_event_log(&dist, &cfg, t).is_err());
        cfg.efficiencies = Some(vec![1.0]);
        assert!(simulate_event_log(&dist, &cfg, t).is_err());
    }
}
