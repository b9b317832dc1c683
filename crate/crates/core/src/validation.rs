//! Sampler validation traces: the row-norm test against uniform samplers and
//! the likelihood-ratio test against distinguishable-photon samplers.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combination::OutputCombination;
use crate::error::{Error, Result};
use crate::matrix::TransferMatrix;
use crate::permanent::{check_mode_set, distinguishable_probability, indistinguishable_probability};
use crate::simulator::EventLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    RowNorm,
    LikelihoodRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationTrace {
    pub kind: TestKind,
    /// One `+1`/`-1` per scored event.
    pub decisions: Vec<i8>,
    /// `running[k]` is the sum of the first `k + 1` decisions.
    pub running: Vec<i64>,
    /// Events where both model probabilities vanished.
    pub skipped: usize,
    /// Events with a zero distinguishable probability, decided `+1`.
    pub infinite_ratio: usize,
}

impl ValidationTrace {
    fn from_decisions(kind: TestKind, decisions: Vec<i8>, skipped: usize, infinite_ratio: usize) -> Self {
        let running = decisions
            .iter()
            .scan(0i64, |acc, &d| {
                *acc += d as i64;
                Some(*acc)
            })
            .collect();
        Self { kind, decisions, running, skipped, infinite_ratio }
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    /// Final running sum, 0 for an empty trace.
    pub fn final_sum(&self) -> i64 {
        self.running.last().copied().unwrap_or(0)
    }

    /// Two columns: 1-based event index and running sum.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# event running_sum")?;
        for (k, s) in self.running.iter().enumerate() {
            writeln!(out, "{} {}", k + 1, s)?;
        }
        Ok(())
    }
}

fn decide(statistic: f64) -> i8 {
    if statistic > 1.0 {
        1
    } else {
        -1
    }
}

/// `R(S) = prod_{r in S} (m / n) sum_{c in inputs} |U_{r c}|^2`.
pub fn row_norm_statistic(matrix: &TransferMatrix, inputs: &[usize], outcome: &OutputCombination) -> Result<f64> {
    let m = matrix.output_modes();
    if outcome.max_mode() >= m {
        return Err(Error::IndexOutOfRange { index: outcome.max_mode(), bound: m });
    }
    let scale = m as f64 / inputs.len() as f64;
    Ok(outcome
        .modes()
        .iter()
        .map(|&r| scale * inputs.iter().map(|&c| matrix.amplitude(r, c).norm_sqr()).sum::<f64>())
        .product())
}

pub fn row_norm_test(log: &EventLog, matrix: &TransferMatrix, inputs: &[usize]) -> Result<ValidationTrace> {
    check_mode_set(inputs, matrix.input_modes())?;
    let decisions = log
        .events()
        .par_iter()
        .map(|e| row_norm_statistic(matrix, inputs, &e.modes).map(decide))
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationTrace::from_decisions(TestKind::RowNorm, decisions, 0, 0))
}

enum Verdict {
    Decided(i8),
    Infinite,
    Skipped,
}

/// Per event, `L = |Perm(U_S)|^2 / Perm(|U_S|^2)` on raw probabilities.
pub fn likelihood_ratio_test(log: &EventLog, matrix: &TransferMatrix, inputs: &[usize]) -> Result<ValidationTrace> {
    check_mode_set(inputs, matrix.input_modes())?;
    let verdicts = log
        .events()
        .par_iter()
        .map(|e| {
            let p_ind = indistinguishable_probability(matrix, inputs, &e.modes)?;
            let p_dist = distinguishable_probability(matrix, inputs, &e.modes)?;
            Ok(match (p_ind > 0.0, p_dist > 0.0) {
                (_, true) => Verdict::Decided(decide(p_ind / p_dist)),
                (true, false) => Verdict::Infinite,
                (false, false) => Verdict::Skipped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut decisions = Vec::with_capacity(verdicts.len());
    let (mut skipped, mut infinite) = (0, 0);
    for v in verdicts {
        match v {
            Verdict::Decided(d) => decisions.push(d),
            Verdict::Infinite => {
                infinite += 1;
                decisions.push(1);
            }
            Verdict::Skipped => skipped += 1,
        }
    }
    Ok(ValidationTrace::from_decisions(TestKind::LikelihoodRatio, decisions, skipped, infinite))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{Event, Timestamp};
    use num_complex::Complex64;
    use std::f64::consts::TAU;

    fn log(m: usize, n: usize, events: &[&[usize]]) -> EventLog {
        let events = events
            .iter()
            .enumerate()
            .map(|(i, modes)| Event {
                tau: Timestamp(i as u64 + 1),
                modes: OutputCombination::new(modes.to_vec()).unwrap(),
            })
            .collect();
        EventLog::new(m, n, Timestamp(1000), events).unwrap()
    }

    /// Fourier matrix: every entry has modulus `1/sqrt(m)`.
    fn fourier(m: usize) -> TransferMatrix {
        let s = 1.0 / (m as f64).sqrt();
        let entries = (0..m * m)
            .map(|k| Complex64::from_polar(s, TAU * ((k / m) * (k % m)) as f64 / m as f64))
            .collect();
        TransferMatrix::new(m, m, entries, crate::matrix::MatrixKind::FullUnitary).unwrap()
    }

    #[test]
    fn flat_matrix_ties_go_negative() {
        let u = fourier(4);
        let l = log(4, 2, &[&[0, 1], &[1, 3], &[2, 3]]);
        let t = row_norm_test(&l, &u, &[0, 1]).unwrap();
        assert_eq!(t.decisions, vec![-1, -1, -1]);
        assert_eq!(t.running, vec![-1, -2, -3]);
        assert_eq!(t.final_sum(), -3);
    }

    #[test]
    fn single_photon_ratio_is_one() {
        let u = crate::matrix::haar_random_unitary(5, 3).unwrap();
        let l = log(5, 1, &[&[0], &[2], &[4]]);
        let t = likelihood_ratio_test(&l, &u, &[1]).unwrap();
        assert_eq!(t.decisions, vec![-1, -1, -1]);
    }

    #[test]
    fn hom_coincidence_is_skipped() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = TransferMatrix::new(
            2,
            2,
            vec![Complex64::new(s, 0.0), Complex64::new(s, 0.0), Complex64::new(s, 0.0), Complex64::new(-s, 0.0)],
            crate::matrix::MatrixKind::FullUnitary,
        )
        .unwrap();
        let l = log(2, 2, &[&[0, 1]]);
        let t = likelihood_ratio_test(&l, &u, &[0, 1]).unwrap();
        // |Perm|^2 leaves rounding residue, Perm(|U|^2) = 1/2: decided -1, not skipped
        assert_eq!(t.decisions, vec![-1]);
        let zero = TransferMatrix::identity(3).unwrap();
        let l = log(3, 2, &[&[1, 2]]);
        let t = likelihood_ratio_test(&l, &zero, &[0, 1]).unwrap();
        assert_eq!(t.skipped, 1);
        assert!(t.is_empty());
    }

    #[test]
    fn out_of_range_row() {
        let u = fourier(3);
        let l = log(5, 1, &[&[4]]);
        assert!(matches!(row_norm_test(&l, &u, &[0]), Err(Error::IndexOutOfRange { index: 4, bound: 3 })));
    }

    #[test]
    fn text_output() {
        let u = fourier(4);
        let t = row_norm_test(&log(4, 2, &[&[0, 1], &[2, 3]]), &u, &[0, 1]).unwrap();
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# event running_sum\n1 -1\n2 -2\n");
    }
}
