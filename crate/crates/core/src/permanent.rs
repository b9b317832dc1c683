//! Matrix permanents and the photon-counting probabilities built on them.
//!
//! [`permanent_ryser`] is the production path: Ryser's inclusion-exclusion
//! formula walked in Gray-code order so every subset differs from the previous
//! one by a single column, giving `O(n 2^n)` work with `O(n)` state.
//! [`permanent_naive`] sums over all `n!` permutations and exists as an
//! independent oracle.

use num_complex::Complex64;

use crate::combination::OutputCombination;
use crate::error::{Error, Result};
use crate::matrix::TransferMatrix;

/// Largest order accepted by [`permanent_ryser`].
pub const RYSER_MAX_ORDER: usize = 24;
/// Largest order accepted by [`permanent_naive`].
pub const NAIVE_MAX_ORDER: usize = 9;

/// Square complex block, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Submatrix {
    order: usize,
    entries: Vec<Complex64>,
}

impl Submatrix {
    pub fn new(order: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != order * order {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for order {order}",
                entries.len()
            )));
        }
        Ok(Self { order, entries })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let order = rows.len();
        let entries: Vec<Complex64> = rows.iter().flatten().copied().collect();
        Self::new(order, entries)
    }

    pub fn from_real(order: usize, entries: &[f64]) -> Result<Self> {
        Self::new(order, entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.order + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Elementwise squared modulus, as a real-valued block.
    pub fn squared_moduli(&self) -> Self {
        Self {
            order: self.order,
            entries: self
                .entries
                .iter()
                .map(|z| Complex64::new(z.norm_sqr(), 0.0))
                .collect(),
        }
    }

    /// Selects `U[outcome[i], inputs[j]]` using output/input addressing.
    pub fn select(
        matrix: &TransferMatrix,
        inputs: &[usize],
        outcome: &OutputCombination,
    ) -> Result<Self> {
        check_selection(matrix, inputs, outcome)?;
        let n = inputs.len();
        let mut entries = Vec::with_capacity(n * n);
        for &out in outcome.modes() {
            for &inp in inputs {
                entries.push(matrix.amplitude(out, inp));
            }
        }
        Self::new(n, entries)
    }
}

fn check_selection(matrix: &TransferMatrix, inputs: &[usize], outcome: &OutputCombination) -> Result<()> {
    if inputs.len() != outcome.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs but {} detected modes",
            inputs.len(),
            outcome.len()
        )));
    }
    check_mode_set(inputs, matrix.input_modes())?;
    // OutputCombination is strictly increasing by construction.
    for &out in outcome.modes() {
        if out >= matrix.output_modes() {
            return Err(Error::IndexOutOfRange {
                index: out,
                bound: matrix.output_modes(),
            });
        }
    }
    Ok(())
}

/// Checks that `modes` are distinct and below `bound`.
pub fn check_mode_set(modes: &[usize], bound: usize) -> Result<()> {
    for (i, &a) in modes.iter().enumerate() {
        if a >= bound {
            return Err(Error::IndexOutOfRange { index: a, bound });
        }
        if modes[..i].contains(&a) {
            return Err(Error::RepeatedIndex(a));
        }
    }
    Ok(())
}

/// Neumaier-compensated complex accumulator.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    re: (f64, f64),
    im: (f64, f64),
}

impl CompensatedSum {
    fn add(&mut self, z: Complex64) {
        neumaier(&mut self.re, z.re);
        neumaier(&mut self.im, z.im);
    }

    fn value(&self) -> Complex64 {
        Complex64::new(self.re.0 + self.re.1, self.im.0 + self.im.1)
    }
}

fn neumaier((sum, comp): &mut (f64, f64), x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Ryser's formula with Gray-code subset updates.
///
/// `perm(A) = (-1)^n sum_{S} (-1)^{|S|} prod_i sum_{j in S} a_ij`. The empty
/// matrix has permanent 1.
pub fn permanent_ryser(a: &Submatrix) -> Result<Complex64> {
    let n = a.order;
    if n > RYSER_MAX_ORDER {
        return Err(Error::SizeLimit {
            order: n,
            limit: RYSER_MAX_ORDER,
        });
    }
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let mut row_sums = vec![Complex64::new(0.0, 0.0); n];
    let mut in_subset = vec![false; n];
    let mut total = CompensatedSum::default();
    let mut subset_size = 0usize;
    for k in 1u64..(1u64 << n) {
        let j = k.trailing_zeros() as usize;
        if in_subset[j] {
            in_subset[j] = false;
            subset_size -= 1;
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s -= a.entries[i * n + j];
            }
        } else {
            in_subset[j] = true;
            subset_size += 1;
            for (i, s) in row_sums.iter_mut().enumerate() {
                *s += a.entries[i * n + j];
            }
        }
        let product = row_sums.iter().fold(Complex64::new(1.0, 0.0), |acc, s| acc * s);
        if subset_size.is_multiple_of(2) {
            total.add(product);
        } else {
            total.add(-product);
        }
    }
    let value = total.value();
    Ok(if n.is_multiple_of(2) { value } else { -value })
}

/// Sum over all permutations. Only for small orders; used as the oracle.
pub fn permanent_naive(a: &Submatrix) -> Result<Complex64> {
    let n = a.order;
    if n > NAIVE_MAX_ORDER {
        return Err(Error::SizeLimit {
            order: n,
            limit: NAIVE_MAX_ORDER,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = Complex64::new(0.0, 0.0);
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; n];
    let term = |p: &[usize]| {
        p.iter()
            .enumerate()
            .fold(Complex64::new(1.0, 0.0), |acc, (i, &j)| acc * a.get(i, j))
    };
    total += term(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            total += term(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(total)
}

/// `|Perm(U_S)|^2` for identical photons entering `inputs` and leaving in `outcome`.
///
/// Not renormalized: for row blocks and collision-free post-selection the
/// caller normalizes.
pub fn indistinguishable_probability(
    matrix: &TransferMatrix,
    inputs: &[usize],
    outcome: &OutputCombination,
) -> Result<f64> {
    let sub = Submatrix::select(matrix, inputs, outcome)?;
    Ok(permanent_ryser(&sub)?.norm_sqr())
}

/// `Perm(|U_S|^2)`, the probability for fully distinguishable photons.
pub fn distinguishable_probability(
    matrix: &TransferMatrix,
    inputs: &[usize],
    outcome: &OutputCombination,
) -> Result<f64> {
    let sub = Submatrix::select(matrix, inputs, outcome)?.squared_moduli();
    // Entries are nonnegative so the permanent is real and nonnegative; clamp rounding.
    Ok(permanent_ryser(&sub)?.re.max(0.0))
}
