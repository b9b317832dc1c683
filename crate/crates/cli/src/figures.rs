//! Plot-ready tab-separated data derived from a finished run bundle.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use tbs_core::distribution::compare_in_subspace;
use tbs_core::reconstruction::occurrence_census;
use tbs_core::simulator::{interarrival_histogram, interval_statistics};
use tbs_core::{Distribution, EventLog, OutputCombination};

use crate::bundle::{sha256_hex, FileEntry, Manifest, MANIFEST};
use crate::config::ExperimentConfig;

pub const FIGURES: &[&str] = &["3b", "3c", "3d", "3e", "4a", "4b", "4c-h", "5"];

/// Writes the data series for figure `id` under `dir/figures/` and adds them
/// to the bundle manifest. Returns the written paths relative to `dir`.
pub fn emit_figure_data(dir: &Path, id: &str) -> Result<Vec<String>> {
    let mut manifest = Manifest::load(dir)?;
    if manifest.status != "complete" {
        bail!("bundle {} is marked {}", dir.display(), manifest.status);
    }
    let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
    let outputs: Vec<(String, String)> = match id {
        "3b" => vec![("fig3b.tsv".into(), fig3b(dir, &cfg)?)],
        "3c" => vec![("fig3c.tsv".into(), fig3c(dir)?)],
        "3d" => vec![("fig3d.tsv".into(), traces(dir, "row-norm")?)],
        "3e" => vec![("fig3e.tsv".into(), traces(dir, "likelihood-ratio")?)],
        "4a" => vec![("fig4a.tsv".into(), fig4a(dir, &cfg)?)],
        "4b" => fig4b(dir)?,
        "4c-h" => fig4ch(dir)?,
        "5" => vec![
            ("fig5_table.csv".into(), read(dir, "advantage.csv")?),
            ("fig5_curve.csv".into(), read(dir, "efficiency_curve.csv")?),
        ],
        other => bail!("unknown figure {other:?}; expected one of {}", FIGURES.join(", ")),
    };

    let mut written = Vec::new();
    for (name, text) in outputs {
        let rel = format!("figures/{name}");
        let path = dir.join(&rel);
        fs::create_dir_all(path.parent().expect("has parent"))?;
        fs::write(&path, &text)?;
        manifest.files.retain(|f| f.path != rel);
        manifest.files.push(FileEntry { path: rel.clone(), sha256: sha256_hex(text.as_bytes()), bytes: text.len() as u64 });
        written.push(rel);
    }
    manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(written)
}

fn read(dir: &Path, rel: &str) -> Result<String> {
    fs::read_to_string(dir.join(rel)).with_context(|| format!("bundle lacks {rel}; was the producing stage configured?"))
}

fn load_log(dir: &Path) -> Result<EventLog> {
    let rel = if dir.join("ingested.jsonl").exists() { "ingested.jsonl" } else { "events.jsonl" };
    let file = fs::File::open(dir.join(rel)).with_context(|| format!("bundle lacks {rel}"))?;
    Ok(EventLog::read_jsonl(BufReader::new(file))?)
}

fn load_dist(dir: &Path, rel: &str) -> Result<Distribution> {
    Ok(Distribution::read_jsonl(read(dir, rel)?.as_bytes())?)
}

#[derive(Deserialize)]
struct ReportDoc {
    n_o: usize,
    estimate: String,
}

fn load_report(dir: &Path, rel: &str) -> Result<(usize, Distribution)> {
    let doc: ReportDoc = serde_json::from_str(&read(dir, rel)?)?;
    Ok((doc.n_o, Distribution::read_jsonl(doc.estimate.as_bytes())?))
}

fn label(c: &OutputCombination) -> String {
    c.modes().iter().map(|m| m.to_string()).collect::<Vec<_>>().join("-")
}

fn fig3b(dir: &Path, cfg: &ExperimentConfig) -> Result<String> {
    let log = load_log(dir)?;
    let stats = interval_statistics(&log, cfg.figures.interval_bins)?;
    let mut out = String::from("bin\tcount\n");
    for (i, c) in stats.counts.iter().enumerate() {
        writeln!(out, "{i}\t{c}")?;
    }
    writeln!(out, "# mean {:.6} variance {:.6} dispersion {:.6}", stats.mean, stats.variance, stats.dispersion())?;
    Ok(out)
}

fn paired(estimate: &Distribution, reference: &Distribution, header: &str) -> String {
    let mut out = format!("combination\tp_timestamp\t{header}\n");
    for (c, p) in estimate.entries() {
        let _ = writeln!(out, "{}\t{p:.9e}\t{:.9e}", label(c), reference.get(c));
    }
    out
}

fn fig3c(dir: &Path) -> Result<String> {
    let (_, estimate) = load_report(dir, "reconstruction.json")?;
    let counting = load_dist(dir, "counting.jsonl")?;
    let m = compare_in_subspace(&estimate, &counting)?;
    let mut out = paired(&estimate, &counting, "p_counting");
    writeln!(out, "# similarity {:.6} tvd {:.6}", m.similarity, m.tvd)?;
    Ok(out)
}

fn traces(dir: &Path, test: &str) -> Result<String> {
    let samples = ["indistinguishable", "uniform", "distinguishable"];
    let mut columns = Vec::new();
    for s in samples {
        let rel = format!("validation/{test}_{s}.txt");
        if dir.join(&rel).exists() {
            let sums: Vec<String> = read(dir, &rel)?
                .lines()
                .filter(|l| !l.starts_with('#'))
                .filter_map(|l| l.split_whitespace().nth(1).map(str::to_string))
                .collect();
            columns.push((s, sums));
        }
    }
    if columns.is_empty() {
        bail!("bundle has no {test} traces; was the validate stage configured?");
    }
    let mut out = String::from("event");
    for (s, _) in &columns {
        write!(out, "\t{s}")?;
    }
    out.push('\n');
    let len = columns.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for k in 0..len {
        write!(out, "{}", k + 1)?;
        for (_, c) in &columns {
            write!(out, "\t{}", c.get(k).map_or("", String::as_str))?;
        }
        out.push('\n');
    }
    Ok(out)
}

fn fig4a(dir: &Path, cfg: &ExperimentConfig) -> Result<String> {
    let log = load_log(dir)?;
    let hist = interarrival_histogram(&log, None, cfg.figures.gap_bins);
    if hist.samples == 0 {
        bail!("need at least two events for a gap histogram");
    }
    // exponential gaps at the empirical rate
    let rate = log.len() as f64 / log.duration().ps() as f64;
    let mut out = String::from("gap_lo_ps\tgap_hi_ps\tcount\texpected\n");
    for (i, c) in hist.counts.iter().enumerate() {
        let lo = i as u64 * hist.bin_width_ps;
        let hi = lo + hist.bin_width_ps;
        let expected = hist.samples as f64 * ((-rate * lo as f64).exp() - (-rate * hi as f64).exp());
        writeln!(out, "{lo}\t{hi}\t{c}\t{expected:.6}")?;
    }
    writeln!(out, "# samples {} mean_gap_ps {:.3}", hist.samples, hist.mean_gap_ps)?;
    Ok(out)
}

#[derive(Deserialize)]
struct MetricsRow {
    n_o: usize,
    kept: usize,
    discarded: usize,
    discarded_fraction: f64,
}

fn fig4b(dir: &Path) -> Result<Vec<(String, String)>> {
    let log = load_log(dir)?;
    let mut census = String::from("occurrences\tcombinations\n");
    for (k, c) in occurrence_census(&log) {
        writeln!(census, "{k}\t{c}")?;
    }
    let rows: Vec<MetricsRow> = serde_json::from_str(&read(dir, "metrics.json")?)?;
    let mut discarded = String::from("n_o\tkept\tdiscarded\tdiscarded_fraction\n");
    for r in rows {
        writeln!(discarded, "{}\t{}\t{}\t{:.6}", r.n_o, r.kept, r.discarded, r.discarded_fraction)?;
    }
    Ok(vec![("fig4b_census.tsv".into(), census), ("fig4b_discarded.tsv".into(), discarded)])
}

fn fig4ch(dir: &Path) -> Result<Vec<(String, String)>> {
    let exact = load_dist(dir, "exact_indist.jsonl")?;
    let mut reports = vec![load_report(dir, "reconstruction.json")?];
    for k in 1..=64 {
        let rel = format!("reconstruction_n{k}.json");
        if dir.join(&rel).exists() {
            reports.push(load_report(dir, &rel)?);
        }
    }
    reports.retain(|(n_o, _)| (5..=10).contains(n_o));
    reports.sort_by_key(|(n_o, _)| *n_o);
    if reports.is_empty() {
        return Err(anyhow!("bundle has no reconstructions with n_o in 5..=10"));
    }
    let mut out = Vec::new();
    for (n_o, estimate) in reports {
        let m = compare_in_subspace(&estimate, &exact)?;
        let mut text = paired(&estimate, &exact, "p_exact");
        writeln!(text, "# n_o {n_o} fidelity {:.6} tvd {:.6}", m.fidelity, m.tvd)?;
        out.push((format!("fig4_n{n_o}.tsv"), text));
    }
    Ok(out)
}
