//! Collision-free output combinations and their colexicographic ranking.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing tuple of output mode indices.
///
/// Ordering is colexicographic: combinations compare by their largest mode
/// first, which makes [`OutputCombination::rank`] a plain sum of binomials.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct OutputCombination(Vec<usize>);

impl OutputCombination {
    pub fn new(modes: Vec<usize>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidDimension("empty combination".into()));
        }
        for w in modes.windows(2) {
            match w[0].cmp(&w[1]) {
                Ordering::Less => {}
                Ordering::Equal => return Err(Error::RepeatedIndex(w[0])),
                Ordering::Greater => {
                    return Err(Error::Domain(format!("modes {modes:?} are not sorted")))
                }
            }
        }
        Ok(Self(modes))
    }

    /// Sorts and validates an arbitrary list of distinct modes.
    pub fn from_unsorted(mut modes: Vec<usize>) -> Result<Self> {
        modes.sort_unstable();
        Self::new(modes)
    }

    pub fn modes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_mode(&self) -> usize {
        *self.0.last().expect("combinations are non-empty")
    }

    /// Colexicographic rank in `[0, C(m, n))`.
    pub fn rank(&self) -> u128 {
        self.0
            .iter()
            .enumerate()
            .map(|(i, &c)| binomial(c as u64, i as u64 + 1))
            .sum()
    }

    /// Inverse of [`rank`](Self::rank) for combinations of size `n`.
    pub fn unrank(mut rank: u128, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("empty combination".into()));
        }
        let mut modes = vec![0usize; n];
        for k in (1..=n).rev() {
            // largest c with C(c, k) <= rank
            let mut c = (k - 1) as u64;
            while binomial(c + 1, k as u64) <= rank {
                c += 1;
            }
            rank -= binomial(c, k as u64);
            modes[k - 1] = c as usize;
        }
        Self::new(modes)
    }
}

impl Ord for OutputCombination {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .iter()
            .rev()
            .cmp(other.0.iter().rev())
            .then(self.0.len().cmp(&other.0.len()))
    }
}

impl PartialOrd for OutputCombination {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TryFrom<Vec<usize>> for OutputCombination {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<OutputCombination> for Vec<usize> {
    fn from(c: OutputCombination) -> Self {
        c.0
    }
}

impl fmt::Display for OutputCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, ")")
    }
}

/// `C(n, k)` in `u128`; saturates on overflow, which cannot happen for `n <= 120`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of collision-free outcomes, `C(m, n)`.
pub fn combination_count(m: usize, n: usize) -> u128 {
    binomial(m as u64, n as u64)
}

/// Streams all size-`n` subsets of `0..m` in colexicographic order.
pub fn enumerate_combinations(m: usize, n: usize) -> Result<Combinations> {
    if n == 0 {
        return Err(Error::InvalidDimension("combination size 0".into()));
    }
    if n > m {
        return Err(Error::InvalidDimension(format!("cannot choose {n} of {m} modes")));
    }
    Ok(Combinations {
        m,
        current: Some((0..n).collect()),
        remaining: combination_count(m, n),
    })
}

#[derive(Debug, Clone)]
pub struct Combinations {
    m: usize,
    current: Option<Vec<usize>>,
    remaining: u128,
}

impl Combinations {
    /// Total number of combinations still to be yielded.
    pub fn remaining(&self) -> u128 {
        self.remaining
    }

    /// Advances without allocating; returns the number of combinations visited.
    pub fn count_streaming(mut self) -> u128 {
        let mut count = 0u128;
        while let Some(cur) = self.current.as_mut() {
            count += 1;
            if !advance_colex(cur, self.m) {
                self.current = None;
            }
        }
        count
    }
}

fn advance_colex(cur: &mut [usize], m: usize) -> bool {
    let n = cur.len();
    for i in 0..n {
        let limit = if i + 1 < n { cur[i + 1] } else { m };
        if cur[i] + 1 < limit {
            cur[i] += 1;
            for (j, c) in cur[..i].iter_mut().enumerate() {
                *c = j;
            }
            return true;
        }
    }
    false
}

impl Iterator for Combinations {
    type Item = OutputCombination;

    fn next(&mut self) -> Option<Self::Item> {
        let cur = self.current.as_mut()?;
        let out = OutputCombination(cur.clone());
        if !advance_colex(cur, self.m) {
            self.current = None;
        }
        self.remaining = self.remaining.saturating_sub(1);
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        match usize::try_from(self.remaining) {
            Ok(r) => (r, Some(r)),
            Err(_) => (usize::MAX, None),
        }
    }
}
