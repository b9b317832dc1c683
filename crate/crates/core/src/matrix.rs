//! Interferometer transfer matrices.
//!
//! A [`TransferMatrix`] is either a full `m x m` unitary (rows are output
//! modes, columns are input modes) or a row block characterized on a subset
//! of input ports. Row blocks follow the layout of a measured characterization
//! table: each row is one injected input port and each column one output mode,
//! so a `3 x 30` block describes three inputs scattered into thirty outputs.
//! Use [`TransferMatrix::amplitude`] to address an element by
//! `(output, input)` without caring which layout is stored.

use std::f64::consts::TAU;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating unitarity and row norms on construction.
pub const UNITARITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixKind {
    FullUnitary,
    RowBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
    kind: MatrixKind,
}

impl TransferMatrix {
    /// Builds a matrix from row-major entries and checks the invariants of `kind`.
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>, kind: MatrixKind) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension(format!("{rows}x{cols} matrix")));
        }
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        let matrix = Self { rows, cols, entries, kind };
        match kind {
            MatrixKind::FullUnitary => {
                if rows != cols {
                    return Err(Error::InvalidDimension(format!(
                        "full unitary must be square, got {rows}x{cols}"
                    )));
                }
                let report = check_unitarity(&matrix, UNITARITY_TOL);
                if !report.pass {
                    return Err(Error::Domain(format!(
                        "matrix is not unitary: max deviation {:e}",
                        report.max_deviation
                    )));
                }
            }
            MatrixKind::RowBlock => {
                if rows > cols {
                    return Err(Error::InvalidDimension(format!(
                        "row block needs rows <= cols, got {rows}x{cols}"
                    )));
                }
                for r in 0..rows {
                    let norm: f64 = matrix.row(r).iter().map(|z| z.norm_sqr()).sum();
                    if norm > 1.0 + UNITARITY_TOL {
                        return Err(Error::Domain(format!("row {r} has squared norm {norm} > 1")));
                    }
                }
            }
        }
        Ok(matrix)
    }

    pub fn identity(m: usize) -> Result<Self> {
        let mut entries = vec![Complex64::new(0.0, 0.0); m * m];
        for i in 0..m {
            entries[i * m + i] = Complex64::new(1.0, 0.0);
        }
        Self::new(m, m, entries, MatrixKind::FullUnitary)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[Complex64] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    /// Number of output modes.
    pub fn output_modes(&self) -> usize {
        match self.kind {
            MatrixKind::FullUnitary => self.rows,
            MatrixKind::RowBlock => self.cols,
        }
    }

    /// Number of addressable input modes.
    pub fn input_modes(&self) -> usize {
        match self.kind {
            MatrixKind::FullUnitary => self.cols,
            MatrixKind::RowBlock => self.rows,
        }
    }

    /// Transition amplitude from `input` to `output`.
    pub fn amplitude(&self, output: usize, input: usize) -> Complex64 {
        match self.kind {
            MatrixKind::FullUnitary => self.get(output, input),
            MatrixKind::RowBlock => self.get(input, output),
        }
    }

    /// Returns a copy with every entry multiplied by `phase` (unit modulus).
    pub fn with_global_phase(&self, phase: f64) -> Self {
        let factor = Complex64::from_polar(1.0, phase);
        Self {
            entries: self.entries.iter().map(|z| z * factor).collect(),
            ..self.clone()
        }
    }

    /// Permutes output modes: output `k` of the result is output `perm[k]` of `self`.
    pub fn permute_outputs(&self, perm: &[usize]) -> Result<Self> {
        let m = self.output_modes();
        if perm.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {m} outputs",
                perm.len()
            )));
        }
        let mut entries = self.entries.clone();
        for (k, &src) in perm.iter().enumerate() {
            if src >= m {
                return Err(Error::IndexOutOfRange { index: src, bound: m });
            }
            for input in 0..self.input_modes() {
                let z = self.amplitude(src, input);
                match self.kind {
                    MatrixKind::FullUnitary => entries[k * self.cols + input] = z,
                    MatrixKind::RowBlock => entries[input * self.cols + k] = z,
                }
            }
        }
        Ok(Self { entries, ..self.clone() })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MatrixFile::from_matrix(self, None))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MatrixFile = serde_json::from_str(text)?;
        file.into_matrix()
    }
}

/// On-disk matrix layout: separate real and imaginary row-major arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub kind: MatrixKind,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_norms: Option<Vec<f64>>,
}

impl MatrixFile {
    pub fn from_matrix(matrix: &TransferMatrix, row_norms: Option<Vec<f64>>) -> Self {
        let split = |f: fn(&Complex64) -> f64| {
            (0..matrix.rows)
                .map(|r| matrix.row(r).iter().map(f).collect())
                .collect()
        };
        Self {
            rows: matrix.rows,
            cols: matrix.cols,
            kind: matrix.kind,
            re: split(|z| z.re),
            im: split(|z| z.im),
            row_norms,
        }
    }

    pub fn into_matrix(self) -> Result<TransferMatrix> {
        if self.re.len() != self.rows || self.im.len() != self.rows {
            return Err(Error::ShapeMismatch("row count disagrees with header".into()));
        }
        let mut entries = Vec::with_capacity(self.rows * self.cols);
        for (re, im) in self.re.iter().zip(&self.im) {
            if re.len() != self.cols || im.len() != self.cols {
                return Err(Error::ShapeMismatch("column count disagrees with header".into()));
            }
            entries.extend(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)));
        }
        TransferMatrix::new(self.rows, self.cols, entries, self.kind)
    }
}

/// Draws an `m x m` Haar-random unitary.
///
/// A complex Ginibre matrix is QR-factorized and each column of `Q` is
/// multiplied by the phase of the matching diagonal entry of `R`, which makes
/// the factorization unique and the result exactly Haar distributed.
pub fn haar_random_unitary(m: usize, seed: u64) -> Result<TransferMatrix> {
    if m == 0 {
        return Err(Error::InvalidDimension("Haar unitary of dimension 0".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut gaussian = || -> f64 { StandardNormal.sample(&mut rng) };
    // Column-major fill order is irrelevant for the distribution but fixed for determinism.
    let z = DMatrix::<Complex64>::from_fn(m, m, |_, _| {
        Complex64::new(gaussian() * scale, gaussian() * scale)
    });
    let qr = z.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..m {
        let d = r[(j, j)];
        let norm = d.norm();
        let phase = if norm > 0.0 { d / norm } else { Complex64::new(1.0, 0.0) };
        for i in 0..m {
            q[(i, j)] *= phase;
        }
    }
    let mut entries = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            entries.push(q[(i, j)]);
        }
    }
    TransferMatrix::new(m, m, entries, MatrixKind::FullUnitary)
}

/// Measured amplitude and phase tables, rows = input ports, columns = output modes.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterizationTable {
    amplitudes: Vec<Vec<f64>>,
    phases: Vec<Vec<f64>>,
}

impl CharacterizationTable {
    pub fn new(amplitudes: Vec<Vec<f64>>, phases: Vec<Vec<f64>>) -> Result<Self> {
        let rows = amplitudes.len();
        if rows == 0 {
            return Err(Error::InvalidDimension("empty characterization table".into()));
        }
        let cols = amplitudes[0].len();
        if cols == 0 {
            return Err(Error::InvalidDimension("characterization table has no columns".into()));
        }
        if phases.len() != rows {
            return Err(Error::ShapeMismatch(format!(
                "{rows} amplitude rows but {} phase rows",
                phases.len()
            )));
        }
        for (r, (a, p)) in amplitudes.iter().zip(&phases).enumerate() {
            if a.len() != cols || p.len() != cols {
                return Err(Error::ShapeMismatch(format!("row {r} is ragged")));
            }
            if let Some(bad) = a.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(Error::Domain(format!("row {r} has invalid amplitude {bad}")));
            }
            if let Some(bad) = p.iter().find(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("row {r} has invalid phase {bad}")));
            }
        }
        Ok(Self { amplitudes, phases })
    }

    pub fn rows(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn cols(&self) -> usize {
        self.amplitudes[0].len()
    }

    pub fn amplitudes(&self) -> &[Vec<f64>] {
        &self.amplitudes
    }

    pub fn phases(&self) -> &[Vec<f64>] {
        &self.phases
    }

    /// Loads the two plain-text tables (whitespace or comma delimited).
    pub fn from_files(amplitudes: &Path, phases: &Path) -> Result<Self> {
        let a = parse_numeric_table(std::fs::File::open(amplitudes)?)?;
        let p = parse_numeric_table(std::fs::File::open(phases)?)?;
        Self::new(a, p)
    }
}

/// Parses a row-major numeric table. Blank lines and `#` comments are skipped.
pub fn parse_numeric_table<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut table: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let row = content
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|tok| !tok.is_empty())
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("{tok:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = table.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        table.push(row);
    }
    Ok(table)
}

/// A reassembled row block together with the norms its rows were divided by.
#[derive(Debug, Clone)]
pub struct AssembledMatrix {
    pub matrix: TransferMatrix,
    /// Euclidean norm of each measured row before renormalization; values
    /// below 1 indicate loss on that input.
    pub row_norms: Vec<f64>,
}

/// Builds `a * exp(i phi)` entries, fixes the per-row phase gauge on the first
/// column and renormalizes every row to unit norm.
pub fn assemble_transfer_matrix(table: &CharacterizationTable) -> Result<AssembledMatrix> {
    let (rows, cols) = (table.rows(), table.cols());
    let mut entries = Vec::with_capacity(rows * cols);
    let mut row_norms = Vec::with_capacity(rows);
    for r in 0..rows {
        let amps = &table.amplitudes[r];
        let phases = &table.phases[r];
        let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateRow { row: r });
        }
        let gauge = phases[0];
        for (a, phi) in amps.iter().zip(phases) {
            let phase = (phi - gauge).rem_euclid(TAU);
            entries.push(Complex64::from_polar(a / norm, phase));
        }
        row_norms.push(norm);
    }
    let matrix = TransferMatrix::new(rows, cols, entries, MatrixKind::RowBlock)?;
    Ok(AssembledMatrix { matrix, row_norms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitarityReport {
    pub max_deviation: f64,
    pub pass: bool,
}

/// Largest absolute element of `M^dagger M - I`.
pub fn check_unitarity(matrix: &TransferMatrix, tol: f64) -> UnitarityReport {
    let (rows, cols) = (matrix.rows, matrix.cols);
    let mut max_deviation: f64 = 0.0;
    for i in 0..cols {
        for j in i..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..rows {
                acc += matrix.get(k, i).conj() * matrix.get(k, j);
            }
            if i == j {
                acc -= 1.0;
            }
            max_deviation = max_deviation.max(acc.norm());
        }
    }
    UnitarityReport {
        max_deviation,
        pass: max_deviation <= tol,
    }
}
