//! Normalized distributions over collision-free output combinations.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combination::{combination_count, enumerate_combinations, OutputCombination};
use crate::error::{Error, Result};
use crate::matrix::TransferMatrix;
use crate::permanent::{check_mode_set, distinguishable_probability, indistinguishable_probability};

/// Tolerance on the total probability of a [`Distribution`].
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Collision-free mass below which an exact distribution is treated as empty.
pub const DEGENERATE_MASS: f64 = 1e-20;

/// Where a distribution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ExactIndist,
    ExactDist,
    Uniform,
    Counting,
    Timestamp,
}

/// Photon model used for exact distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhotonModel {
    Indistinguishable,
    Distinguishable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    m: usize,
    n: usize,
    provenance: Provenance,
    /// Sorted by colexicographic order, no duplicates.
    entries: Vec<(OutputCombination, f64)>,
    raw_mass: f64,
}

impl Distribution {
    /// Normalizes nonnegative weights. Zero-weight entries are kept in the table.
    pub fn from_weights(
        m: usize,
        n: usize,
        provenance: Provenance,
        mut weights: Vec<(OutputCombination, f64)>,
    ) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        weights.sort_by(|a, b| a.0.cmp(&b.0));
        for w in weights.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Domain(format!("duplicate combination {}", w[0].0)));
            }
        }
        for (c, p) in &weights {
            if c.len() != n {
                return Err(Error::DimensionMismatch(format!("combination {c} in an n={n} distribution")));
            }
            if c.max_mode() >= m {
                return Err(Error::IndexOutOfRange { index: c.max_mode(), bound: m });
            }
            if !(p.is_finite() && *p >= 0.0) {
                return Err(Error::Domain(format!("invalid weight {p} for {c}")));
            }
        }
        let raw_mass: f64 = weights.iter().map(|(_, p)| p).sum();
        if raw_mass <= 0.0 {
            return Err(Error::DegenerateDistribution);
        }
        for (_, p) in weights.iter_mut() {
            *p /= raw_mass;
        }
        Ok(Self {
            m,
            n,
            provenance,
            entries: weights,
            raw_mass,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Total weight before normalization (the collision-free mass for exact distributions).
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    pub fn entries(&self) -> &[(OutputCombination, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, combination: &OutputCombination) -> f64 {
        self.entries
            .binary_search_by(|(c, _)| c.cmp(combination))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    /// Entries with strictly positive probability.
    pub fn support(&self) -> impl Iterator<Item = &(OutputCombination, f64)> {
        self.entries.iter().filter(|(_, p)| *p > 0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// Restricts to the support of `other` and renormalizes there.
    pub fn restricted_to(&self, other: &Distribution) -> Result<Distribution> {
        check_same_shape(self, other)?;
        let weights = other
            .support()
            .map(|(c, _)| (c.clone(), self.get(c)))
            .collect();
        Distribution::from_weights(self.m, self.n, self.provenance, weights)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = DistributionHeader {
            m: self.m,
            n: self.n,
            provenance: self.provenance,
            raw_mass: self.raw_mass,
        };
        serde_json::to_writer(&mut out, &header)?;
        writeln!(out)?;
        for (modes, probability) in &self.entries {
            serde_json::to_writer(&mut out, &DistributionRecord { modes: modes.clone(), probability: *probability })?;
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: DistributionHeader = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line?)?,
            None => return Err(Error::EmptyDistribution),
        };
        let mut weights = Vec::new();
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DistributionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            weights.push((rec.modes, rec.probability));
        }
        let mut dist = Distribution::from_weights(header.m, header.n, header.provenance, weights)?;
        if (dist.raw_mass - 1.0).abs() <= NORMALIZATION_TOL {
            dist.raw_mass = header.raw_mass;
        } else {
            return Err(Error::Domain(format!(
                "stored probabilities sum to {}, not 1",
                dist.raw_mass
            )));
        }
        Ok(dist)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DistributionHeader {
    m: usize,
    n: usize,
    provenance: Provenance,
    raw_mass: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DistributionRecord {
    modes: OutputCombination,
    probability: f64,
}

/// Exact distribution over all `C(m, n)` collision-free outcomes, renormalized
/// on that subspace. The discarded (bunched) mass is available as `1 - raw_mass()`
/// for full unitaries.
pub fn exact_distribution(
    matrix: &TransferMatrix,
    inputs: &[usize],
    model: PhotonModel,
) -> Result<Distribution> {
    let n = inputs.len();
    let m = matrix.output_modes();
    check_mode_set(inputs, matrix.input_modes())?;
    let combos: Vec<OutputCombination> = enumerate_combinations(m, n)?.collect();
    // Slots are pre-assigned by index, so the result is independent of scheduling.
    let weights: Vec<f64> = combos
        .par_iter()
        .map(|c| match model {
            PhotonModel::Indistinguishable => indistinguishable_probability(matrix, inputs, c),
            PhotonModel::Distinguishable => distinguishable_probability(matrix, inputs, c),
        })
        .collect::<Result<_>>()?;
    // Permanents that cancel exactly in theory leave rounding residue of order 1e-33.
    if weights.iter().sum::<f64>() < DEGENERATE_MASS {
        return Err(Error::DegenerateDistribution);
    }
    let provenance = match model {
        PhotonModel::Indistinguishable => Provenance::ExactIndist,
        PhotonModel::Distinguishable => Provenance::ExactDist,
    };
    Distribution::from_weights(m, n, provenance, combos.into_iter().zip(weights).collect())
}

/// Equal weight on every collision-free outcome.
pub fn uniform_distribution(m: usize, n: usize) -> Result<Distribution> {
    let k = combination_count(m, n);
    if k > 50_000_000 {
        return Err(Error::Domain(format!("C({m},{n}) = {k} outcomes is too many to tabulate")));
    }
    let weights = enumerate_combinations(m, n)?.map(|c| (c, 1.0)).collect();
    Distribution::from_weights(m, n, Provenance::Uniform, weights)
}

/// Similarity, total variation distance and fidelity between two distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `S = sum_i sqrt(p_i q_i)`
    pub similarity: f64,
    /// `D = 1/2 sum_i |p_i - q_i|`
    pub tvd: f64,
    /// Same functional as `similarity`, reported under its own name when the
    /// reference is a theoretical distribution.
    pub fidelity: f64,
}

fn check_same_shape(p: &Distribution, q: &Distribution) -> Result<()> {
    if p.m != q.m || p.n != q.n {
        return Err(Error::DimensionMismatch(format!(
            "(m, n) = ({}, {}) vs ({}, {})",
            p.m, p.n, q.m, q.n
        )));
    }
    Ok(())
}

/// Metrics over the union of both supports, absent entries counting as 0.
pub fn distribution_metrics(p: &Distribution, q: &Distribution) -> Result<Metrics> {
    check_same_shape(p, q)?;
    let (a, b) = (&p.entries, &q.entries);
    let (mut i, mut j) = (0, 0);
    let mut overlap = 0.0;
    let mut abs_diff = 0.0;
    while i < a.len() || j < b.len() {
        let ord = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.0.cmp(&y.0),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, _) => std::cmp::Ordering::Greater,
        };
        match ord {
            std::cmp::Ordering::Less => {
                abs_diff += a[i].1;
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                abs_diff += b[j].1;
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                overlap += (a[i].1 * b[j].1).sqrt();
                abs_diff += (a[i].1 - b[j].1).abs();
                i += 1;
                j += 1;
            }
        }
    }
    let similarity = overlap.min(1.0);
    Ok(Metrics {
        similarity,
        tvd: (0.5 * abs_diff).min(1.0),
        fidelity: similarity,
    })
}

/// Compares `estimate` with `reference` inside the estimate's support: the
/// reference is restricted to the combinations the estimate kept and
/// renormalized there before computing the metrics.
pub fn compare_in_subspace(estimate: &Distribution, reference: &Distribution) -> Result<Metrics> {
    let restricted = reference.restricted_to(estimate)?;
    distribution_metrics(estimate, &restricted)
}
