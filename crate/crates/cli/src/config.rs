//! Experiment configuration, presets and seed derivation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tbs_core::reconstruction::{TimestampStatistic, DEFAULT_BAND_FACTOR};
use tbs_core::tofs::{WindowMode, DEFAULT_WINDOW_PS};
use tbs_core::validation::TestKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?} (available: {list})", list = PRESETS.join(", "))]
    UnknownPreset(String),
}

/// A full pipeline description. Every random stage draws its seed from
/// `seed` through [`derive_seed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tofs: Option<TofsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<ReconstructionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantage: Option<AdvantageSection>,
    #[serde(default)]
    pub figures: FigureSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MatrixSource {
    /// Haar-random `m x m` unitary; the seed is derived from the root seed unless given.
    Haar {
        m: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Amplitude and phase tables, one row per injected input port.
    Characterization { amplitudes: PathBuf, phases: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub inputs: Vec<usize>,
    pub rate_hz: f64,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiencies: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TofsSection {
    #[serde(default = "default_window")]
    pub window_ps: u64,
    #[serde(default)]
    pub window_mode: WindowMode,
    /// Per-mode delays; empty means all zero.
    #[serde(default)]
    pub delays_ps: Vec<u64>,
    #[serde(default)]
    pub jitter_ps: f64,
    #[serde(default)]
    pub dark_rate_hz: f64,
    #[serde(default)]
    pub trigger_dark_rate_hz: f64,
    #[serde(default = "default_true")]
    pub calibrate: bool,
    #[serde(default = "default_scan_range")]
    pub scan_range_ps: u64,
    #[serde(default = "default_scan_step")]
    pub scan_step_ps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionSection {
    pub n_o: usize,
    #[serde(default = "default_true")]
    pub filter: bool,
    #[serde(default = "default_band")]
    pub band_factor: f64,
    #[serde(default)]
    pub statistic: TimestampStatistic,
    /// Additional occurrence thresholds to reconstruct with, for sweeps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Impostor {
    Uniform,
    Distinguishable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    pub tests: Vec<TestKind>,
    pub against: Vec<Impostor>,
    /// Score only the first `events` events of each log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvantageSection {
    pub n_min: usize,
    pub n_max: usize,
    pub etas: Vec<f64>,
    #[serde(default = "default_pump")]
    pub r_pump_hz: f64,
    #[serde(default = "default_speedup")]
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSection {
    #[serde(default = "default_bins")]
    pub interval_bins: usize,
    #[serde(default = "default_gap_bins")]
    pub gap_bins: usize,
}

impl Default for FigureSection {
    fn default() -> Self {
        Self { interval_bins: default_bins(), gap_bins: default_gap_bins() }
    }
}

fn default_window() -> u64 {
    DEFAULT_WINDOW_PS
}
fn default_true() -> bool {
    true
}
fn default_scan_range() -> u64 {
    10_000
}
fn default_scan_step() -> u64 {
    50
}
fn default_band() -> f64 {
    DEFAULT_BAND_FACTOR
}
fn default_pump() -> f64 {
    tbs_core::advantage::DEFAULT_PUMP_RATE_HZ
}
fn default_speedup() -> f64 {
    tbs_core::advantage::DEFAULT_SPEEDUP
}
fn default_bins() -> usize {
    100
}
fn default_gap_bins() -> usize {
    50
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn output_modes(&self) -> Option<usize> {
        match &self.matrix {
            Some(MatrixSource::Haar { m, .. }) => Some(*m),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.name.is_empty() {
            return bad("name must not be empty".into());
        }
        if let Some(src) = &self.source {
            if self.matrix.is_none() {
                return bad("[source] needs a [matrix] section".into());
            }
            let n = src.inputs.len();
            if n == 0 {
                return bad("inputs must not be empty".into());
            }
            let mut sorted = src.inputs.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != n {
                return bad(format!("inputs {:?} repeat a mode", src.inputs));
            }
            if let Some(m) = self.output_modes() {
                if n > m {
                    return bad(format!("{n} photons in {m} modes"));
                }
                if let Some(&max) = sorted.last() {
                    if max >= m {
                        return bad(format!("input mode {max} outside 0..{m}"));
                    }
                }
                if let Some(eff) = &src.efficiencies {
                    if eff.len() != m {
                        return bad(format!("{} efficiencies for {m} modes", eff.len()));
                    }
                }
            }
            if !(src.rate_hz > 0.0 && src.rate_hz.is_finite()) {
                return bad(format!("rate_hz {} must be positive", src.rate_hz));
            }
            if !(src.duration_s > 0.0 && src.duration_s.is_finite()) {
                return bad(format!("duration_s {} must be positive", src.duration_s));
            }
        } else if self.tofs.is_some() || self.reconstruction.is_some() || self.validation.is_some() {
            return bad("[tofs], [reconstruction] and [validation] need a [source] section".into());
        }
        if let (Some(t), Some(m)) = (&self.tofs, self.output_modes()) {
            if !t.delays_ps.is_empty() && t.delays_ps.len() != m {
                return bad(format!("{} delays for {m} modes", t.delays_ps.len()));
            }
            if t.scan_step_ps == 0 {
                return bad("scan_step_ps must be positive".into());
            }
        }
        if let Some(r) = &self.reconstruction {
            if r.n_o == 0 || r.sweep.contains(&0) {
                return bad("n_o must be at least 1".into());
            }
            if !(r.band_factor > 1.0) {
                return bad(format!("band_factor {} must exceed 1", r.band_factor));
            }
        }
        if let Some(v) = &self.validation {
            if v.tests.is_empty() {
                return bad("validation needs at least one test".into());
            }
            if v.events == Some(0) {
                return bad("validation events must be positive".into());
            }
        }
        if let Some(a) = &self.advantage {
            if a.n_min == 0 || a.n_max < a.n_min {
                return bad(format!("advantage range {}..={} is empty", a.n_min, a.n_max));
            }
            if a.etas.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
                return bad("advantage efficiencies must lie in (0, 1]".into());
            }
            if !(a.speedup >= 1.0) || !(a.r_pump_hz > 0.0) {
                return bad("speedup must be >= 1 and r_pump_hz positive".into());
            }
        }
        if self.figures.interval_bins == 0 || self.figures.gap_bins == 0 {
            return bad("figure bin counts must be positive".into());
        }
        Ok(())
    }
}

/// Deterministic child seed: the first eight bytes of `SHA-256(root || label)`.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub const PRESETS: &[&str] = &["minimal", "fig3b", "fig3c", "fig3de", "fig4", "fig5"];

pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let text = match name {
        "minimal" => MINIMAL,
        "fig3b" => FIG3B,
        "fig3c" => FIG3C,
        "fig3de" => FIG3DE,
        "fig4" => FIG4,
        "fig5" => FIG5,
        other => return Err(ConfigError::UnknownPreset(other.into())),
    };
    ExperimentConfig::from_toml(text)
}

const MINIMAL: &str = r#"
name = "minimal"
seed = 1

[matrix]
kind = "haar"
m = 4

[source]
inputs = [0, 1]
rate_hz = 1000.0
duration_s = 1.0

[tofs]
delays_ps = [0, 250, 500, 750]
jitter_ps = 20.0
window_mode = "symmetric"
scan_range_ps = 2000

[reconstruction]
n_o = 2
sweep = [1, 3]

[validation]
tests = ["row-norm", "likelihood-ratio"]
against = ["uniform", "distinguishable"]

[advantage]
n_min = 2
n_max = 6
etas = [0.5, 1.0]

[figures]
interval_bins = 10
gap_bins = 10
"#;

const FIG3B: &str = r#"
name = "fig3b"
seed = 3

[matrix]
kind = "haar"
m = 30

[source]
inputs = [0, 1, 2]
rate_hz = 13.909166666666667
duration_s = 6000.0

[figures]
interval_bins = 6000
gap_bins = 50
"#;

const FIG3C: &str = r#"
name = "fig3c"
seed = 31

[matrix]
kind = "haar"
m = 30

[source]
inputs = [0, 1, 2]
rate_hz = 1000.0
duration_s = 1200.0

[reconstruction]
n_o = 5
"#;

const FIG3DE: &str = r#"
name = "fig3de"
seed = 358

[matrix]
kind = "haar"
m = 30

[source]
inputs = [0, 1, 2]
rate_hz = 1000.0
duration_s = 1.0

[reconstruction]
n_o = 1
filter = false

[validation]
tests = ["row-norm", "likelihood-ratio"]
against = ["uniform", "distinguishable"]
events = 358
"#;

const FIG4: &str = r#"
name = "fig4"
seed = 4

[matrix]
kind = "haar"
m = 30

[source]
inputs = [0, 1, 2]
rate_hz = 1000.0
duration_s = 1200.0

[reconstruction]
n_o = 5
sweep = [1, 2, 3, 4, 6, 7, 8, 9, 10]

[figures]
interval_bins = 100
gap_bins = 50
"#;

const FIG5: &str = r#"
name = "fig5"
seed = 5

[advantage]
n_min = 5
n_max = 40
etas = [0.5, 0.6, 0.68, 0.7, 0.8, 0.9, 1.0]
"#;
