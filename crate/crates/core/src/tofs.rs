//! Time-of-flight storage streams: emission, parsing, delay calibration and
//! n-fold coincidence extraction.
//!
//! Detection channel ids coincide with output mode indices `0..m`; the trigger
//! channel must use an id outside that range. On disk a capture is a
//! `manifest.json` plus one plain-text file per channel holding one integer
//! picosecond tag per line.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution as _, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::combination::OutputCombination;
use crate::error::{Error, Result};
use crate::simulator::{Event, EventLog, Timestamp, PS_PER_SECOND};

pub type ChannelId = u32;

/// Default coincidence window width, 2 ns.
pub const DEFAULT_WINDOW_PS: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelTagStream {
    channel: ChannelId,
    tags: Vec<Timestamp>,
}

impl ChannelTagStream {
    pub fn new(channel: ChannelId, tags: Vec<Timestamp>) -> Result<Self> {
        for (i, w) in tags.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::Integrity { line: i + 2, tag: w[1].0, previous: w[0].0 });
            }
        }
        Ok(Self { channel, tags })
    }

    pub fn channel(&self) -> ChannelId {
        self.channel
    }

    pub fn tags(&self) -> &[Timestamp] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Reads one integer tick per line. Blank lines are ignored; the line
    /// numbers in errors are 1-based physical lines.
    pub fn parse<R: Read>(channel: ChannelId, reader: R) -> Result<Self> {
        let mut tags = Vec::new();
        let mut previous: Option<u64> = None;
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let tag: u64 = text.parse().map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("{text:?}: {e}"),
            })?;
            if let Some(prev) = previous {
                if tag < prev {
                    return Err(Error::Integrity { line: idx + 1, tag, previous: prev });
                }
            }
            previous = Some(tag);
            tags.push(Timestamp(tag));
        }
        Ok(Self { channel, tags })
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        for t in &self.tags {
            writeln!(out, "{}", t.0)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Emission parameters: delays, timing jitter and dark counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TofsLayout {
    pub trigger_channel: ChannelId,
    /// Delay of each detection channel (index = mode); empty means all zero.
    pub delays_ps: Vec<u64>,
    /// Standard deviation of Gaussian timing jitter on detection tags.
    pub jitter_ps: f64,
    /// Dark-count rate on every detection channel.
    pub dark_rate_hz: f64,
    /// Dark-count rate on the trigger channel.
    pub trigger_dark_rate_hz: f64,
    pub seed: u64,
}

impl TofsLayout {
    pub fn noiseless(trigger_channel: ChannelId, delays_ps: Vec<u64>) -> Self {
        Self {
            trigger_channel,
            delays_ps,
            jitter_ps: 0.0,
            dark_rate_hz: 0.0,
            trigger_dark_rate_hz: 0.0,
            seed: 0,
        }
    }
}

/// A full multi-channel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct TofsCapture {
    pub modes: usize,
    pub duration: Timestamp,
    pub trigger_channel: ChannelId,
    /// Delays declared at emission time, if known.
    pub declared_delays: BTreeMap<ChannelId, i64>,
    pub streams: BTreeMap<ChannelId, ChannelTagStream>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    modes: usize,
    duration_ps: u64,
    trigger_channel: ChannelId,
    channels: Vec<ManifestChannel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestChannel {
    id: ChannelId,
    file: String,
    #[serde(default)]
    delay_ps: i64,
}

impl TofsCapture {
    pub fn detection_channels(&self) -> impl Iterator<Item = ChannelId> + '_ {
        self.streams.keys().copied().filter(move |&c| c != self.trigger_channel)
    }

    pub fn stream(&self, channel: ChannelId) -> Result<&ChannelTagStream> {
        self.streams.get(&channel).ok_or(Error::UnknownChannel(channel))
    }

    /// Writes `manifest.json` and `ch<id>.txt` files into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut channels = Vec::new();
        for (&id, stream) in &self.streams {
            let file = format!("ch{id}.txt");
            stream.write(fs::File::create(dir.join(&file))?)?;
            channels.push(ManifestChannel {
                id,
                file,
                delay_ps: self.declared_delays.get(&id).copied().unwrap_or(0),
            });
        }
        let manifest = Manifest {
            modes: self.modes,
            duration_ps: self.duration.0,
            trigger_channel: self.trigger_channel,
            channels,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// Loads a capture from its manifest; channel files are resolved relative to it.
pub fn parse_streams(manifest_path: &Path) -> Result<TofsCapture> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut streams = BTreeMap::new();
    let mut declared_delays = BTreeMap::new();
    for ch in &manifest.channels {
        if streams.contains_key(&ch.id) {
            return Err(Error::Domain(format!("channel {} listed twice", ch.id)));
        }
        let stream = ChannelTagStream::parse(ch.id, fs::File::open(base.join(&ch.file))?)?;
        streams.insert(ch.id, stream);
        declared_delays.insert(ch.id, ch.delay_ps);
    }
    if !streams.contains_key(&manifest.trigger_channel) {
        return Err(Error::UnknownChannel(manifest.trigger_channel));
    }
    Ok(TofsCapture {
        modes: manifest.modes,
        duration: Timestamp(manifest.duration_ps),
        trigger_channel: manifest.trigger_channel,
        declared_delays,
        streams,
    })
}

fn poisson_tags(rng: &mut ChaCha20Rng, rate_hz: f64, duration: Timestamp) -> Result<Vec<u64>> {
    if rate_hz <= 0.0 {
        return Ok(Vec::new());
    }
    let exp = Exp::new(rate_hz).map_err(|e| Error::Domain(e.to_string()))?;
    let mut t = 0.0;
    let mut out = Vec::new();
    loop {
        t += exp.sample(rng) * PS_PER_SECOND;
        let tick = t.round();
        if tick > duration.0 as f64 {
            break;
        }
        out.push(tick as u64);
    }
    Ok(out)
}

/// Renders an event log as raw per-channel tags.
///
/// The trigger channel receives `tau` for every event; each fired mode
/// channel receives `tau + delay + jitter` (clamped at 0). Independent
/// Poisson dark counts are mixed in and every stream is sorted.
pub fn emit_tofs_streams(log: &EventLog, layout: &TofsLayout) -> Result<TofsCapture> {
    let m = log.m();
    if (layout.trigger_channel as usize) < m {
        return Err(Error::Domain(format!(
            "trigger channel {} collides with detection channels 0..{m}",
            layout.trigger_channel
        )));
    }
    let delays: Vec<u64> = if layout.delays_ps.is_empty() {
        vec![0; m]
    } else if layout.delays_ps.len() == m {
        layout.delays_ps.clone()
    } else {
        return Err(Error::DimensionMismatch(format!(
            "{} delays for {m} detection channels",
            layout.delays_ps.len()
        )));
    };
    if !(layout.jitter_ps >= 0.0 && layout.dark_rate_hz >= 0.0 && layout.trigger_dark_rate_hz >= 0.0) {
        return Err(Error::Domain("jitter and dark rates must be nonnegative".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(layout.seed);
    let jitter = Normal::new(0.0, layout.jitter_ps).map_err(|e| Error::Domain(e.to_string()))?;

    let mut trigger: Vec<u64> = Vec::with_capacity(log.len());
    let mut detection: Vec<Vec<u64>> = vec![Vec::new(); m];
    for e in log.events() {
        trigger.push(e.tau.0);
        for &mode in e.modes.modes() {
            let offset = if layout.jitter_ps > 0.0 { jitter.sample(&mut rng).round() } else { 0.0 };
            let t = (e.tau.0 + delays[mode]) as f64 + offset;
            detection[mode].push(t.max(0.0) as u64);
        }
    }
    trigger.extend(poisson_tags(&mut rng, layout.trigger_dark_rate_hz, log.duration())?);
    for tags in detection.iter_mut() {
        tags.extend(poisson_tags(&mut rng, layout.dark_rate_hz, log.duration())?);
    }

    let mut streams = BTreeMap::new();
    let mut declared_delays = BTreeMap::new();
    trigger.sort_unstable();
    streams.insert(
        layout.trigger_channel,
        ChannelTagStream::new(layout.trigger_channel, trigger.into_iter().map(Timestamp).collect())?,
    );
    declared_delays.insert(layout.trigger_channel, 0);
    for (mode, mut tags) in detection.into_iter().enumerate() {
        tags.sort_unstable();
        let id = mode as ChannelId;
        streams.insert(id, ChannelTagStream::new(id, tags.into_iter().map(Timestamp).collect())?);
        declared_delays.insert(id, delays[mode] as i64);
    }
    Ok(TofsCapture {
        modes: m,
        duration: log.duration(),
        trigger_channel: layout.trigger_channel,
        declared_delays,
        streams,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// `[tau, tau + w)`
    #[default]
    TriggerAnchored,
    /// `[tau - w/2, tau + w/2)`
    Symmetric,
}

/// Coincidence window. A zero width only matches tags exactly equal to the trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceWindow {
    pub width_ps: u64,
    pub mode: WindowMode,
}

impl Default for CoincidenceWindow {
    fn default() -> Self {
        Self { width_ps: DEFAULT_WINDOW_PS, mode: WindowMode::TriggerAnchored }
    }
}

impl CoincidenceWindow {
    pub fn trigger_anchored(width_ps: u64) -> Self {
        Self { width_ps, mode: WindowMode::TriggerAnchored }
    }

    pub fn symmetric(width_ps: u64) -> Self {
        Self { width_ps, mode: WindowMode::Symmetric }
    }

    /// Half-open bounds around a trigger at `tau`.
    fn bounds(&self, tau: i64) -> (i64, i64) {
        let w = self.width_ps as i64;
        if w == 0 {
            return (tau, tau + 1);
        }
        match self.mode {
            WindowMode::TriggerAnchored => (tau, tau + w),
            WindowMode::Symmetric => (tau - w / 2, tau - w / 2 + w),
        }
    }
}

/// Result of a delay scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub delays: BTreeMap<ChannelId, i64>,
    /// Coincidence count at the chosen delay.
    pub peak_counts: BTreeMap<ChannelId, u64>,
    /// Channels with no coincidences anywhere in the scan range.
    pub failed: Vec<ChannelId>,
}

impl CalibrationReport {
    /// The delay map, or the first failed channel as an error.
    pub fn into_delays(self) -> Result<BTreeMap<ChannelId, i64>> {
        match self.failed.first() {
            Some(&channel) => Err(Error::CalibrationFailed { channel }),
            None => Ok(self.delays),
        }
    }
}

/// Scans candidate delays `k * step` in `[-range, range]` for every detection
/// channel and picks the one with the most trigger coincidences.
///
/// A pair `(tau, t)` counts for candidate `d` when `t - tau` lies in the
/// step-wide bin centred on `d`. Ties go to the smallest `|d|`.
pub fn calibrate_delays(
    capture: &TofsCapture,
    trigger: ChannelId,
    scan_range_ps: u64,
    step_ps: u64,
) -> Result<CalibrationReport> {
    if step_ps == 0 {
        return Err(Error::Domain("scan step must be positive".into()));
    }
    let trig = capture.stream(trigger)?;
    if trig.is_empty() {
        return Err(Error::Domain(format!("trigger channel {trigger} has no tags")));
    }
    let half_bins = (scan_range_ps / step_ps) as i64;
    let step = step_ps as i64;
    let lo_edge = -half_bins * step - step / 2;
    let hi_edge = half_bins * step - step / 2 + step;

    let mut report = CalibrationReport {
        delays: BTreeMap::new(),
        peak_counts: BTreeMap::new(),
        failed: Vec::new(),
    };
    for channel in capture.streams.keys().copied().filter(|&c| c != trigger) {
        let tags = capture.streams[&channel].tags();
        let mut hist = vec![0u64; (2 * half_bins + 1) as usize];
        let mut start = 0usize;
        for tau in trig.tags() {
            let tau = tau.0 as i64;
            while start < tags.len() && (tags[start].0 as i64) - tau < lo_edge {
                start += 1;
            }
            let mut k = start;
            while k < tags.len() {
                let diff = tags[k].0 as i64 - tau;
                if diff >= hi_edge {
                    break;
                }
                let bin = (diff - lo_edge).div_euclid(step) as usize;
                hist[bin] += 1;
                k += 1;
            }
        }
        let best = hist
            .iter()
            .enumerate()
            .map(|(i, &count)| (count, (i as i64 - half_bins) * step))
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.abs().cmp(&a.1.abs())).then(b.1.cmp(&a.1)));
        match best {
            Some((count, delay)) if count > 0 => {
                report.delays.insert(channel, delay);
                report.peak_counts.insert(channel, count);
            }
            _ => report.failed.push(channel),
        }
    }
    Ok(report)
}

/// Groups delay-corrected detection tags around each trigger tag and keeps the
/// triggers for which exactly `fold` distinct detection channels fired.
///
/// Each detection tag is consumed at most once: every trigger, in time order,
/// takes the earliest unconsumed in-window tag of each channel, whether or not
/// the trigger ends up being kept.
pub fn extract_coincidences(
    capture: &TofsCapture,
    trigger: ChannelId,
    delays: &BTreeMap<ChannelId, i64>,
    window: CoincidenceWindow,
    fold: usize,
) -> Result<EventLog> {
    if fold == 0 {
        return Err(Error::Domain("fold must be at least 1".into()));
    }
    for &ch in delays.keys() {
        if !capture.streams.contains_key(&ch) {
            return Err(Error::UnknownChannel(ch));
        }
    }
    let trig = capture.stream(trigger)?;
    let mut channels: Vec<(ChannelId, Vec<i64>)> = Vec::new();
    for ch in capture.streams.keys().copied().filter(|&c| c != trigger) {
        if ch as usize >= capture.modes {
            return Err(Error::IndexOutOfRange { index: ch as usize, bound: capture.modes });
        }
        let delay = *delays
            .get(&ch)
            .ok_or_else(|| Error::Domain(format!("no delay given for channel {ch}")))?;
        let corrected = capture.streams[&ch].tags().iter().map(|t| t.0 as i64 - delay).collect();
        channels.push((ch, corrected));
    }
    let mut cursors = vec![0usize; channels.len()];
    let mut events = Vec::new();
    let mut last_tau: Option<u64> = None;
    let mut fired: Vec<usize> = Vec::with_capacity(channels.len());
    for tau in trig.tags() {
        if tau.0 == 0 || last_tau == Some(tau.0) {
            continue;
        }
        last_tau = Some(tau.0);
        let (start, end) = window.bounds(tau.0 as i64);
        fired.clear();
        for (k, (ch, tags)) in channels.iter().enumerate() {
            let cur = &mut cursors[k];
            while *cur < tags.len() && tags[*cur] < start {
                *cur += 1;
            }
            if *cur < tags.len() && tags[*cur] < end {
                *cur += 1;
                fired.push(*ch as usize);
            }
        }
        if fired.len() == fold {
            events.push(Event {
                tau: *tau,
                modes: OutputCombination::from_unsorted(fired.clone())?,
            });
        }
    }
    let duration = events.last().map_or(capture.duration, |e: &Event| e.tau.max(capture.duration));
    EventLog::new(capture.modes, fold, duration, events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(v: &[u64]) -> Vec<Timestamp> {
        v.iter().copied().map(Timestamp).collect()
    }

    fn capture(streams: Vec<(ChannelId, Vec<u64>)>, modes: usize, trigger: ChannelId) -> TofsCapture {
        TofsCapture {
            modes,
            duration: Timestamp(1_000_000),
            trigger_channel: trigger,
            declared_delays: BTreeMap::new(),
            streams: streams
                .into_iter()
                .map(|(c, t)| (c, ChannelTagStream::new(c, ts(&t)).unwrap()))
                .collect(),
        }
    }

    fn zero_delays(c: &TofsCapture) -> BTreeMap<ChannelId, i64> {
        c.detection_channels().map(|ch| (ch, 0)).collect()
    }

    #[test]
    fn parse_empty_and_unsorted() {
        let s = ChannelTagStream::parse(3, "".as_bytes()).unwrap();
        assert!(s.is_empty());
        let err = ChannelTagStream::parse(3, "100\n50\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Integrity { line: 2, tag: 50, previous: 100 }));
        let err = ChannelTagStream::parse(3, "1\n2\nabc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn extra_channel_in_window_drops_trigger() {
        // trigger at 1000; channels 0, 1, 2 fire; channel 3 also fires
        let c = capture(
            vec![(9, vec![1000, 50_000]), (0, vec![1100, 50_100]), (1, vec![1200, 50_200]), (2, vec![1300, 50_300]), (3, vec![1400])],
            4,
            9,
        );
        let log = extract_coincidences(&c, 9, &zero_delays(&c), CoincidenceWindow::default(), 3).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.events()[0].tau, Timestamp(50_000));
        assert_eq!(log.events()[0].modes.modes(), &[0, 1, 2]);
    }

    #[test]
    fn zero_width_window_needs_exact_tags() {
        let c = capture(vec![(9, vec![1000, 2000]), (0, vec![1000, 2001]), (1, vec![1000, 2000])], 2, 9);
        let log = extract_coincidences(&c, 9, &zero_delays(&c), CoincidenceWindow::trigger_anchored(0), 2).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.events()[0].tau, Timestamp(1000));
    }

    #[test]
    fn window_edges_are_half_open() {
        let c = capture(vec![(9, vec![1000]), (0, vec![1000]), (1, vec![3000])], 2, 9);
        let d = zero_delays(&c);
        assert_eq!(extract_coincidences(&c, 9, &d, CoincidenceWindow::trigger_anchored(2000), 2).unwrap().len(), 0);
        assert_eq!(extract_coincidences(&c, 9, &d, CoincidenceWindow::trigger_anchored(2001), 2).unwrap().len(), 1);
        let c = capture(vec![(9, vec![5000]), (0, vec![4000]), (1, vec![5999])], 2, 9);
        let d = zero_delays(&c);
        assert_eq!(extract_coincidences(&c, 9, &d, CoincidenceWindow::trigger_anchored(2000), 2).unwrap().len(), 0);
        assert_eq!(extract_coincidences(&c, 9, &d, CoincidenceWindow::symmetric(2000), 2).unwrap().len(), 1);
    }

    #[test]
    fn tags_are_consumed_once() {
        // two triggers 500 ps apart share one candidate tag per channel
        let c = capture(vec![(9, vec![1000, 1500]), (0, vec![1600])], 1, 9);
        let log = extract_coincidences(&c, 9, &zero_delays(&c), CoincidenceWindow::default(), 1).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.events()[0].tau, Timestamp(1000));
    }

    #[test]
    fn delay_map_errors() {
        let c = capture(vec![(9, vec![1000]), (0, vec![1000])], 1, 9);
        let mut d = zero_delays(&c);
        d.insert(7, 0);
        assert!(matches!(
            extract_coincidences(&c, 9, &d, CoincidenceWindow::default(), 1),
            Err(Error::UnknownChannel(7))
        ));
        assert!(extract_coincidences(&c, 9, &BTreeMap::new(), CoincidenceWindow::default(), 1).is_err());
    }

    #[test]
    fn calibration_on_zero_offsets_and_noise() {
        let c = capture(vec![(9, vec![1000, 9000, 40_000]), (0, vec![1000, 9000, 40_000])], 1, 9);
        let report = calibrate_delays(&c, 9, 1000, 50).unwrap();
        assert_eq!(report.delays[&0], 0);
        assert_eq!(report.peak_counts[&0], 3);

        let c = capture(vec![(9, vec![1000, 9000]), (0, vec![500_000, 700_000])], 1, 9);
        let report = calibrate_delays(&c, 9, 1000, 50).unwrap();
        assert_eq!(report.failed, vec![0]);
        assert!(matches!(report.into_delays(), Err(Error::CalibrationFailed { channel: 0 })));
    }

    #[test]
    fn calibration_tie_prefers_small_delay() {
        let c = capture(vec![(9, vec![10_000, 20_000]), (0, vec![9_900, 20_100])], 1, 9);
        let report = calibrate_delays(&c, 9, 500, 100).unwrap();
        assert_eq!(report.delays[&0], -100);
    }
}
