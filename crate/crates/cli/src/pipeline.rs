//! Full pipeline: matrix, exact distribution, simulation, ToFS round trip,
//! reconstruction, validation and advantage tables.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use tbs_core::advantage::{advantage_table, efficiency_curve, write_table, Benchmark};
use tbs_core::distribution::{
    compare_in_subspace, distribution_metrics, exact_distribution, uniform_distribution, Metrics, PhotonModel,
};
use tbs_core::matrix::{
    assemble_transfer_matrix, check_unitarity, haar_random_unitary, CharacterizationTable, MatrixFile, UNITARITY_TOL,
};
use tbs_core::reconstruction::{counting_estimate, timestamp_estimate, TimestampConfig};
use tbs_core::simulator::{simulate_event_log, SourceConfig};
use tbs_core::tofs::{calibrate_delays, emit_tofs_streams, extract_coincidences, parse_streams, CoincidenceWindow, TofsLayout};
use tbs_core::validation::{likelihood_ratio_test, row_norm_test, TestKind, ValidationTrace};
use tbs_core::{Distribution, EventLog, MatrixKind, Timestamp, TransferMatrix};

use crate::bundle::{Bundle, Manifest};
use crate::config::{derive_seed, ExperimentConfig, Impostor, MatrixSource};

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {message}")]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    bundle: Bundle,
    matrix: Option<TransferMatrix>,
    exact: Option<Distribution>,
    log: Option<EventLog>,
}

impl Run<'_> {
    fn seed(&mut self, label: &str) -> u64 {
        let s = derive_seed(self.cfg.seed, label);
        self.bundle.seeds.insert(label.to_string(), s);
        s
    }

    fn write_jsonl(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> tbs_core::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.bundle.write(rel, buf)
    }

    fn matrix(&self) -> Result<&TransferMatrix> {
        self.matrix.as_ref().ok_or_else(|| anyhow!("matrix stage did not run"))
    }

    fn inputs(&self) -> Vec<usize> {
        self.cfg.source.as_ref().map(|s| s.inputs.clone()).unwrap_or_default()
    }
}

type Stage = fn(&mut Run) -> Result<()>;

/// Runs every configured stage into `out_dir`. On failure the partial bundle
/// keeps its files, gains a `FAILED` marker and a manifest with status `failed`.
pub fn run_pipeline(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest, StageFailure> {
    let fail = |stage: &str, e: anyhow::Error| StageFailure { stage: stage.into(), message: format!("{e:#}") };
    let bundle = Bundle::create(out_dir).map_err(|e| fail("setup", e))?;
    let mut run = Run { cfg, bundle, matrix: None, exact: None, log: None };
    run.bundle.write("config.toml", cfg.to_toml()).map_err(|e| fail("setup", e))?;

    let mut stages: Vec<(&str, Stage)> = Vec::new();
    if cfg.matrix.is_some() {
        stages.push(("matrix", stage_matrix));
    }
    if cfg.source.is_some() {
        stages.push(("exact-dist", stage_exact));
        stages.push(("simulate", stage_simulate));
    }
    if cfg.tofs.is_some() {
        stages.push(("tofs", stage_tofs));
    }
    if cfg.reconstruction.is_some() {
        stages.push(("reconstruct", stage_reconstruct));
    }
    if cfg.validation.is_some() {
        stages.push(("validate", stage_validate));
    }
    if cfg.advantage.is_some() {
        stages.push(("advantage", stage_advantage));
    }

    for (name, stage) in stages {
        if let Err(e) = stage(&mut run) {
            let failure = fail(name, e);
            // the failure itself is what gets reported; a manifest error here is secondary
            let _ = run.bundle.finish(&cfg.name, &cfg.hash(), cfg.seed, Some((name, &failure.message)));
            return Err(failure);
        }
        run.bundle.stages.push(name.to_string());
    }
    run.bundle.finish(&cfg.name, &cfg.hash(), cfg.seed, None).map_err(|e| fail("manifest", e))
}

fn stage_matrix(run: &mut Run) -> Result<()> {
    let (matrix, row_norms) = match run.cfg.matrix.as_ref().expect("stage scheduled with matrix") {
        MatrixSource::Haar { m, seed } => {
            let seed = match seed {
                Some(s) => {
                    run.bundle.seeds.insert("matrix".into(), *s);
                    *s
                }
                None => run.seed("matrix"),
            };
            (haar_random_unitary(*m, seed)?, None)
        }
        MatrixSource::Characterization { amplitudes, phases } => {
            let table = CharacterizationTable::from_files(amplitudes, phases)
                .with_context(|| format!("reading {} and {}", amplitudes.display(), phases.display()))?;
            let assembled = assemble_transfer_matrix(&table)?;
            (assembled.matrix, Some(assembled.row_norms))
        }
    };
    let json = serde_json::to_string_pretty(&MatrixFile::from_matrix(&matrix, row_norms))?;
    run.bundle.write("matrix.json", json)?;
    if matrix.kind() == MatrixKind::FullUnitary {
        let report = check_unitarity(&matrix, UNITARITY_TOL);
        run.bundle.write("unitarity.json", serde_json::to_string_pretty(&report)?)?;
    }
    run.matrix = Some(matrix);
    Ok(())
}

fn stage_exact(run: &mut Run) -> Result<()> {
    let inputs = run.inputs();
    let exact = exact_distribution(run.matrix()?, &inputs, PhotonModel::Indistinguishable)?;
    run.write_jsonl("exact_indist.jsonl", |b| exact.write_jsonl(b))?;
    run.exact = Some(exact);
    Ok(())
}

fn stage_simulate(run: &mut Run) -> Result<()> {
    let src = run.cfg.source.clone().expect("stage scheduled with source");
    let seed = run.seed("simulate");
    let cfg = SourceConfig { rate_hz: src.rate_hz, efficiencies: src.efficiencies, seed };
    let exact = run.exact.as_ref().ok_or_else(|| anyhow!("exact distribution missing"))?;
    let log = simulate_event_log(exact, &cfg, Timestamp::from_seconds(src.duration_s))?;
    run.write_jsonl("events.jsonl", |b| log.write_jsonl(b))?;
    run.log = Some(log);
    Ok(())
}

#[derive(Serialize)]
struct IngestSummary {
    planted_events: usize,
    extracted_events: usize,
    identical: bool,
    delays_ps: BTreeMap<u32, i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    peak_counts: Option<BTreeMap<u32, u64>>,
}

fn stage_tofs(run: &mut Run) -> Result<()> {
    let t = run.cfg.tofs.clone().expect("stage scheduled with tofs");
    let log = run.log.take().ok_or_else(|| anyhow!("event log missing"))?;
    let trigger = log.m() as u32;
    let layout = TofsLayout {
        trigger_channel: trigger,
        delays_ps: if t.delays_ps.is_empty() { vec![0; log.m()] } else { t.delays_ps.clone() },
        jitter_ps: t.jitter_ps,
        dark_rate_hz: t.dark_rate_hz,
        trigger_dark_rate_hz: t.trigger_dark_rate_hz,
        seed: run.seed("tofs"),
    };
    let capture = emit_tofs_streams(&log, &layout)?;
    capture.write_dir(&run.bundle.path("tofs"))?;
    let mut names: Vec<String> = capture.streams.keys().map(|c| format!("tofs/ch{c}.txt")).collect();
    names.push("tofs/manifest.json".into());
    for name in &names {
        run.bundle.record(name)?;
    }

    let parsed = parse_streams(&run.bundle.path("tofs/manifest.json"))?;
    let (delays, peaks) = if t.calibrate {
        let report = calibrate_delays(&parsed, trigger, t.scan_range_ps, t.scan_step_ps)?;
        let peaks = report.peak_counts.clone();
        (report.into_delays()?, Some(peaks))
    } else {
        (parsed.detection_channels().map(|c| (c, parsed.declared_delays[&c])).collect(), None)
    };
    let window = CoincidenceWindow { width_ps: t.window_ps, mode: t.window_mode };
    let extracted = extract_coincidences(&parsed, trigger, &delays, window, log.n())?;
    run.write_jsonl("ingested.jsonl", |b| extracted.write_jsonl(b))?;
    let summary = IngestSummary {
        planted_events: log.len(),
        extracted_events: extracted.len(),
        identical: extracted.events() == log.events(),
        delays_ps: delays,
        peak_counts: peaks,
    };
    run.bundle.write("ingest.json", serde_json::to_string_pretty(&summary)?)?;
    run.log = Some(extracted);
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow {
    n_o: usize,
    kept: usize,
    discarded: usize,
    discarded_fraction: f64,
    events_used: usize,
    events_total: usize,
    vs_counting_subspace: Metrics,
    vs_counting_union: Metrics,
    vs_exact_subspace: Metrics,
}

fn stage_reconstruct(run: &mut Run) -> Result<()> {
    let r = run.cfg.reconstruction.clone().expect("stage scheduled with reconstruction");
    let log = run.log.as_ref().ok_or_else(|| anyhow!("event log missing"))?;
    let exact = run.exact.as_ref().ok_or_else(|| anyhow!("exact distribution missing"))?;
    let counting = counting_estimate(log)?;
    let mut counting_buf = Vec::new();
    counting.write_jsonl(&mut counting_buf)?;

    let mut thresholds = vec![r.n_o];
    thresholds.extend(r.sweep.iter().copied().filter(|&k| k != r.n_o));
    thresholds.sort_unstable();
    thresholds.dedup();
    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    for n_o in thresholds {
        let cfg = TimestampConfig { n_o, statistic: r.statistic, filter: r.filter, band_factor: r.band_factor };
        let report = timestamp_estimate(log, cfg)?;
        rows.push(MetricsRow {
            n_o,
            kept: report.kept,
            discarded: report.discarded,
            discarded_fraction: report.discarded_fraction(),
            events_used: report.events_used,
            events_total: log.len(),
            vs_counting_subspace: compare_in_subspace(&report.estimate, &counting)?,
            vs_counting_union: distribution_metrics(&report.estimate, &counting)?,
            vs_exact_subspace: compare_in_subspace(&report.estimate, exact)?,
        });
        let name = if n_o == r.n_o { "reconstruction.json".to_string() } else { format!("reconstruction_n{n_o}.json") };
        outputs.push((name, report.to_json()?));
    }
    run.bundle.write("counting.jsonl", counting_buf)?;
    for (name, json) in outputs {
        run.bundle.write(&name, json)?;
    }
    run.bundle.write("metrics.json", serde_json::to_string_pretty(&rows)?)?;
    Ok(())
}

#[derive(Serialize)]
struct TraceSummary {
    test: TestKind,
    sample: &'static str,
    events: usize,
    final_sum: i64,
    skipped: usize,
    infinite_ratio: usize,
}

fn stage_validate(run: &mut Run) -> Result<()> {
    let v = run.cfg.validation.clone().expect("stage scheduled with validation");
    let src = run.cfg.source.clone().expect("validated config");
    let matrix = run.matrix()?.clone();
    let inputs = run.inputs();
    let limit = v.events.unwrap_or(usize::MAX);
    let log = run.log.as_ref().ok_or_else(|| anyhow!("event log missing"))?.truncated(limit);

    let mut samples: Vec<(&'static str, EventLog)> = vec![("indistinguishable", log.clone())];
    for impostor in &v.against {
        let (label, dist) = match impostor {
            Impostor::Uniform => ("uniform", uniform_distribution(log.m(), log.n())?),
            Impostor::Distinguishable => {
                let d = exact_distribution(&matrix, &inputs, PhotonModel::Distinguishable)?;
                run.write_jsonl("exact_dist.jsonl", |b| d.write_jsonl(b))?;
                ("distinguishable", d)
            }
        };
        let cfg = SourceConfig::new(src.rate_hz, run.seed(&format!("impostor-{label}")));
        let sample = simulate_event_log(&dist, &cfg, Timestamp::from_seconds(src.duration_s))?.truncated(limit);
        run.write_jsonl(&format!("validation/{label}_events.jsonl"), |b| sample.write_jsonl(b))?;
        samples.push((label, sample));
    }

    let mut summary = Vec::new();
    for test in &v.tests {
        for (label, sample) in &samples {
            let trace: ValidationTrace = match test {
                TestKind::RowNorm => row_norm_test(sample, &matrix, &inputs)?,
                TestKind::LikelihoodRatio => likelihood_ratio_test(sample, &matrix, &inputs)?,
            };
            let mut buf = Vec::new();
            trace.write_text(&mut buf)?;
            run.bundle.write(&format!("validation/{}_{label}.txt", test_label(*test)), buf)?;
            summary.push(TraceSummary {
                test: *test,
                sample: label,
                events: trace.len(),
                final_sum: trace.final_sum(),
                skipped: trace.skipped,
                infinite_ratio: trace.infinite_ratio,
            });
        }
    }
    run.bundle.write("validation/summary.json", serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

pub fn test_label(kind: TestKind) -> &'static str {
    match kind {
        TestKind::RowNorm => "row-norm",
        TestKind::LikelihoodRatio => "likelihood-ratio",
    }
}

fn stage_advantage(run: &mut Run) -> Result<()> {
    let a = run.cfg.advantage.clone().expect("stage scheduled with advantage");
    let rows = advantage_table(a.n_min..=a.n_max, &a.etas, a.r_pump_hz, a.speedup)?;
    let mut buf = Vec::new();
    write_table(&rows, &mut buf)?;
    run.bundle.write("advantage.csv", buf)?;
    let curve = efficiency_curve(a.n_min..=a.n_max, Benchmark::default(), a.r_pump_hz, a.speedup)?;
    let mut text = String::from("n,m,eta_standard,eta_timestamp,log10_steps,advantage_flag\n");
    let fmt = |e: Option<f64>| e.map_or_else(|| "unattainable".to_string(), |v| format!("{v:.6}"));
    for p in &curve {
        text.push_str(&format!(
            "{},{},{},{},{:.6},{}\n",
            p.n,
            p.m,
            fmt(p.eta_standard),
            fmt(p.eta_timestamp),
            p.log10_steps,
            u8::from(p.advantage)
        ));
    }
    run.bundle.write("efficiency_curve.csv", text)?;
    Ok(())
}
