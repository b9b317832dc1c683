use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tbs_cli::bundle::Manifest;
use tbs_cli::config::{self, ConfigError, ExperimentConfig};
use tbs_cli::figures::emit_figure_data;
use tbs_cli::pipeline::run_pipeline;
use tbs_core::advantage::{advantage_table, equivalent_photon_number, write_table, DEFAULT_PUMP_RATE_HZ, DEFAULT_SPEEDUP};
use tbs_core::distribution::{exact_distribution, PhotonModel};
use tbs_core::matrix::{assemble_transfer_matrix, haar_random_unitary, CharacterizationTable, MatrixFile};
use tbs_core::reconstruction::{counting_estimate, timestamp_estimate, TimestampConfig, TimestampStatistic, DEFAULT_BAND_FACTOR};
use tbs_core::simulator::{simulate_event_log, SourceConfig};
use tbs_core::tofs::{
    calibrate_delays, emit_tofs_streams, extract_coincidences, parse_streams, CoincidenceWindow, TofsLayout, WindowMode,
    DEFAULT_WINDOW_PS,
};
use tbs_core::validation::{likelihood_ratio_test, row_norm_test};
use tbs_core::{Distribution, EventLog, Timestamp, TransferMatrix};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "tbs", version, about = "Timestamp boson sampling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Haar-random unitary or a matrix assembled from characterization tables.
    GenMatrix {
        #[arg(long, conflicts_with_all = ["amplitudes", "phases"], required_unless_present = "amplitudes")]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, requires = "phases")]
        amplitudes: Option<PathBuf>,
        #[arg(long, requires = "amplitudes")]
        phases: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Exact output distribution over collision-free combinations.
    ExactDist {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Model::Indistinguishable)]
        model: Model,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Sample a timestamped event log from a distribution.
    Simulate {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        rate_hz: f64,
        #[arg(long)]
        duration_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        efficiencies: Option<Vec<f64>>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Render an event log as per-channel time-tag files.
    EmitTofs {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, value_delimiter = ',')]
        delays_ps: Vec<u64>,
        #[arg(long, default_value_t = 0.0)]
        jitter_ps: f64,
        #[arg(long, default_value_t = 0.0)]
        dark_rate_hz: f64,
        #[arg(long, default_value_t = 0.0)]
        trigger_dark_rate_hz: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Extract n-fold coincidences from time-tag files.
    Ingest {
        /// Stream manifest written by emit-tofs.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        trigger_channel: Option<u32>,
        #[arg(long, default_value_t = DEFAULT_WINDOW_PS)]
        window_ps: u64,
        #[arg(long, value_enum, default_value_t = Window::TriggerAnchored)]
        window_mode: Window,
        #[arg(long)]
        fold: usize,
        /// Use the delays declared in the manifest instead of calibrating.
        #[arg(long)]
        declared_delays: bool,
        #[arg(long, default_value_t = 10_000)]
        scan_range_ps: u64,
        #[arg(long, default_value_t = 50)]
        scan_step_ps: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Estimate the output distribution from an event log.
    Reconstruct {
        #[arg(long)]
        events: PathBuf,
        /// Occurrence threshold; omit for the counting estimator.
        #[arg(long)]
        n_o: Option<usize>,
        #[arg(long, value_enum, default_value_t = Switch::On)]
        filter: Switch,
        #[arg(long, default_value_t = DEFAULT_BAND_FACTOR)]
        band_factor: f64,
        #[arg(long, value_enum, default_value_t = Statistic::MeanInterval)]
        statistic: Statistic,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Running discriminator trace of an event log against a matrix.
    Validate {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<usize>,
        #[arg(long, value_enum)]
        test: Test,
        /// Keep only the first N events.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Sampling-rate and step-count table.
    Advantage {
        #[arg(long, default_value_t = 5)]
        n_min: usize,
        #[arg(long, default_value_t = 40)]
        n_max: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9,1.0")]
        etas: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_PUMP_RATE_HZ)]
        r_pump_hz: f64,
        #[arg(long, default_value_t = DEFAULT_SPEEDUP)]
        speedup: f64,
        /// Also print the equivalent photon number for this (n, eta).
        #[arg(long, num_args = 2, value_names = ["N", "ETA"])]
        equivalent: Option<Vec<String>>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline from a config file or a named preset.
    Run {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Bundle directory; defaults to `$TBS_OUTPUT_ROOT/<name>` or `runs/<name>`.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, env = "TBS_OUTPUT_ROOT", default_value = "runs")]
        output_root: PathBuf,
        /// Print the resolved config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Write plot data for a figure from a finished bundle.
    Figure {
        #[arg(long)]
        bundle: PathBuf,
        /// One of 3b, 3c, 3d, 3e, 4a, 4b, 4c-h, 5, or `all`.
        #[arg(long)]
        id: String,
    },
    /// Recompute the hashes recorded in a bundle manifest.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Indistinguishable,
    Distinguishable,
}

#[derive(Clone, Copy, ValueEnum)]
enum Window {
    TriggerAnchored,
    Symmetric,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Statistic {
    MeanInterval,
    MeanAbsolute,
    NthArrival,
}

#[derive(Clone, Copy, ValueEnum)]
enum Test {
    RowNorm,
    LikelihoodRatio,
}

/// Failures that map to the configuration exit code.
#[derive(Debug, thiserror::Error)]
#[error(transparent)]
struct UsageError(#[from] ConfigError);

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_STAGE)
            }
        }
    }
}

fn write_out(path: &Path, data: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, data).with_context(|| format!("cannot write {}", path.display()))
}

fn read_matrix(path: &Path) -> Result<TransferMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(TransferMatrix::from_json(&text)?)
}

fn read_log(path: &Path) -> Result<EventLog> {
    let file = fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(EventLog::read_jsonl(BufReader::new(file))?)
}

fn read_dist(path: &Path) -> Result<Distribution> {
    let file = fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(Distribution::read_jsonl(BufReader::new(file))?)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenMatrix { m, seed, amplitudes, phases, out } => {
            let file = match (m, amplitudes, phases) {
                (Some(m), _, _) => MatrixFile::from_matrix(&haar_random_unitary(m, seed)?, None),
                (None, Some(a), Some(p)) => {
                    let assembled = assemble_transfer_matrix(&CharacterizationTable::from_files(&a, &p)?)?;
                    MatrixFile::from_matrix(&assembled.matrix, Some(assembled.row_norms))
                }
                _ => bail!("need --m or both --amplitudes and --phases"),
            };
            write_out(&out, serde_json::to_string_pretty(&file)?)
        }
        Command::ExactDist { matrix, inputs, model, out } => {
            let model = match model {
                Model::Indistinguishable => PhotonModel::Indistinguishable,
                Model::Distinguishable => PhotonModel::Distinguishable,
            };
            let dist = exact_distribution(&read_matrix(&matrix)?, &inputs, model)?;
            write_out(&out, dist.to_jsonl_string()?)
        }
        Command::Simulate { dist, rate_hz, duration_s, seed, efficiencies, out } => {
            let cfg = SourceConfig { rate_hz, efficiencies, seed };
            let log = simulate_event_log(&read_dist(&dist)?, &cfg, Timestamp::from_seconds(duration_s))?;
            let mut buf = Vec::new();
            log.write_jsonl(&mut buf)?;
            write_out(&out, buf)
        }
        Command::EmitTofs { events, delays_ps, jitter_ps, dark_rate_hz, trigger_dark_rate_hz, seed, out_dir } => {
            let log = read_log(&events)?;
            let delays_ps = if delays_ps.is_empty() { vec![0; log.m()] } else { delays_ps };
            let layout = TofsLayout {
                trigger_channel: log.m() as u32,
                delays_ps,
                jitter_ps,
                dark_rate_hz,
                trigger_dark_rate_hz,
                seed,
            };
            emit_tofs_streams(&log, &layout)?.write_dir(&out_dir)?;
            Ok(())
        }
        Command::Ingest {
            manifest,
            trigger_channel,
            window_ps,
            window_mode,
            fold,
            declared_delays,
            scan_range_ps,
            scan_step_ps,
            out,
        } => {
            let capture = parse_streams(&manifest)?;
            let trigger = trigger_channel.unwrap_or(capture.trigger_channel);
            let delays: BTreeMap<u32, i64> = if declared_delays {
                capture.detection_channels().map(|c| (c, capture.declared_delays[&c])).collect()
            } else {
                let report = calibrate_delays(&capture, trigger, scan_range_ps, scan_step_ps)?;
                for (c, d) in &report.delays {
                    eprintln!("channel {c}: delay {d} ps ({} tags at peak)", report.peak_counts[c]);
                }
                report.into_delays()?
            };
            let mode = match window_mode {
                Window::TriggerAnchored => WindowMode::TriggerAnchored,
                Window::Symmetric => WindowMode::Symmetric,
            };
            let window = CoincidenceWindow { width_ps: window_ps, mode };
            let log = extract_coincidences(&capture, trigger, &delays, window, fold)?;
            let mut buf = Vec::new();
            log.write_jsonl(&mut buf)?;
            write_out(&out, buf)
        }
        Command::Reconstruct { events, n_o, filter, band_factor, statistic, out } => {
            let log = read_log(&events)?;
            match n_o {
                None => write_out(&out, counting_estimate(&log)?.to_jsonl_string()?),
                Some(n_o) => {
                    let statistic = match statistic {
                        Statistic::MeanInterval => TimestampStatistic::MeanInterval,
                        Statistic::MeanAbsolute => TimestampStatistic::MeanAbsolute,
                        Statistic::NthArrival => TimestampStatistic::NthArrival,
                    };
                    let cfg = TimestampConfig { n_o, statistic, filter: filter == Switch::On, band_factor };
                    write_out(&out, timestamp_estimate(&log, cfg)?.to_json()?)
                }
            }
        }
        Command::Validate { events, matrix, inputs, test, limit, out } => {
            let log = read_log(&events)?.truncated(limit.unwrap_or(usize::MAX));
            let matrix = read_matrix(&matrix)?;
            let trace = match test {
                Test::RowNorm => row_norm_test(&log, &matrix, &inputs)?,
                Test::LikelihoodRatio => likelihood_ratio_test(&log, &matrix, &inputs)?,
            };
            let mut buf = Vec::new();
            trace.write_text(&mut buf)?;
            write_out(&out, buf)
        }
        Command::Advantage { n_min, n_max, etas, r_pump_hz, speedup, equivalent, out } => {
            if n_min == 0 || n_min > n_max {
                return Err(UsageError(ConfigError::Invalid(format!("empty photon range {n_min}..={n_max}"))).into());
            }
            let rows = advantage_table(n_min..=n_max, &etas, r_pump_hz, speedup)?;
            let mut buf = Vec::new();
            write_table(&rows, &mut buf)?;
            match out {
                Some(path) => write_out(&path, buf)?,
                None => std::io::stdout().write_all(&buf)?,
            }
            if let Some(pair) = equivalent {
                let n: usize = pair[0].parse().context("N must be an integer")?;
                let eta: f64 = pair[1].parse().context("ETA must be a number")?;
                let eq = equivalent_photon_number(n, eta, r_pump_hz, speedup)?;
                eprintln!("{}", serde_json::to_string(&eq)?);
            }
            Ok(())
        }
        Command::Run { config, preset, output, output_root, print_config } => {
            let cfg = match (config, preset) {
                (Some(path), _) => ExperimentConfig::load(&path).map_err(UsageError)?,
                (None, Some(name)) => config::preset(&name).map_err(UsageError)?,
                (None, None) => unreachable!("clap requires one of --config or --preset"),
            };
            if print_config {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let dir = output.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| output_root.join(&cfg.name));
            let manifest = run_pipeline(&cfg, &dir)?;
            println!("{}: {} stages, {} files in {}", manifest.name, manifest.stages.len(), manifest.files.len(), dir.display());
            Ok(())
        }
        Command::Figure { bundle, id } => {
            if id != "all" {
                for path in emit_figure_data(&bundle, &id)? {
                    println!("{}", bundle.join(path).display());
                }
                return Ok(());
            }
            // `all` emits whatever the bundle's stages support
            let mut emitted = 0;
            for id in tbs_cli::figures::FIGURES {
                match emit_figure_data(&bundle, id) {
                    Ok(paths) => {
                        for path in paths {
                            println!("{}", bundle.join(path).display());
                            emitted += 1;
                        }
                    }
                    Err(e) => eprintln!("skipped {id}: {e:#}"),
                }
            }
            if emitted == 0 {
                bail!("bundle {} supports none of the figures", bundle.display());
            }
            Ok(())
        }
        Command::Verify { bundle } => {
            let manifest = Manifest::load(&bundle)?;
            let bad = manifest.verify(&bundle)?;
            if !bad.is_empty() {
                bail!("hash mismatch: {}", bad.join(", "));
            }
            println!("{} files verified", manifest.files.len());
            Ok(())
        }
    }
}
