//! Pareto dominance and first-front extraction on column subsets of a
//! [`ScaledMatrix`]. Maximization everywhere.
//!
//! [`non_dominated_mask`] sorts the projected rows lexicographically in
//! descending order and filters them against the running front (sort-filter
//! skyline). A row can only be dominated by a row that precedes it in that
//! order, and by transitivity some front member dominates every dominated
//! row, so each candidate is compared against the front only.
//! [`non_dominated_mask_naive`] is the all-pairs reference it must match.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::combinatorics::CombinationSet;
use crate::dataset::ScaledMatrix;

/// `true` iff `a` dominates `b` on the columns of `idx`.
pub fn dominates(a: &[f64], b: &[f64], idx: &CombinationSet) -> bool {
    dominates_on(a, b, idx.columns())
}

fn dominates_on(a: &[f64], b: &[f64], columns: impl Iterator<Item = usize>) -> bool {
    let mut strict = false;
    for j in columns {
        if a[j] < b[j] {
            return false;
        }
        if a[j] > b[j] {
            strict = true;
        }
    }
    strict
}

/// One bit per site: set when the site is on the first front.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParetoMask {
    pub bits: Vec<bool>,
}

impl ParetoMask {
    pub fn from_members(n: usize, members: &[u32]) -> Self {
        let mut bits = vec![false; n];
        for &i in members {
            bits[i as usize] = true;
        }
        ParetoMask { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn members(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.then_some(i))
            .collect()
    }

    pub fn as_u8(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| b as u8).collect()
    }
}

pub fn non_dominated_mask(matrix: &ScaledMatrix, idx: &CombinationSet) -> ParetoMask {
    let columns: Vec<usize> = idx.columns().collect();
    let mut finder = FrontFinder::default();
    let members = finder.front(matrix, &columns);
    ParetoMask::from_members(matrix.n(), members)
}

/// All-pairs O(n^2 s) reference implementation.
pub fn non_dominated_mask_naive(matrix: &ScaledMatrix, idx: &CombinationSet) -> ParetoMask {
    let n = matrix.n();
    let bits = (0..n)
        .map(|i| !(0..n).any(|o| o != i && dominates(matrix.row(o), matrix.row(i), idx)))
        .collect();
    ParetoMask { bits }
}

/// Reusable scratch space for repeated front extraction.
#[derive(Debug, Default, Clone)]
pub struct FrontFinder {
    projected: Vec<f64>,
    order: Vec<u32>,
    front: Vec<u32>,
    front_values: Vec<f64>,
}

impl FrontFinder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Front members (ascending site index) on zero-based `columns`.
    pub fn front(&mut self, matrix: &ScaledMatrix, columns: &[usize]) -> &[u32] {
        let n = matrix.n();
        let s = columns.len();
        self.front.clear();
        if n == 0 || s == 0 {
            return &self.front;
        }

        if s == 1 {
            let j = columns[0];
            let best = (0..n)
                .map(|i| matrix.get(i, j))
                .fold(f64::NEG_INFINITY, f64::max);
            self.front.extend(
                (0..n)
                    .filter(|&i| matrix.get(i, j) == best)
                    .map(|i| i as u32),
            );
            return &self.front;
        }

        self.projected.clear();
        self.projected.reserve(n * s);
        for i in 0..n {
            let row = matrix.row(i);
            self.projected.extend(columns.iter().map(|&j| row[j]));
        }

        let projected = &self.projected;
        self.order.clear();
        self.order.extend(0..n as u32);
        self.order.sort_unstable_by(|&a, &b| {
            let ra = &projected[a as usize * s..(a as usize + 1) * s];
            let rb = &projected[b as usize * s..(b as usize + 1) * s];
            lexicographic_desc(ra, rb).then(a.cmp(&b))
        });

        self.front_values.clear();
        for &cand in &self.order {
            let row = &projected[cand as usize * s..(cand as usize + 1) * s];
            let dominated = self
                .front_values
                .chunks_exact(s)
                .any(|w| weakly_dominates_distinct(w, row));
            if !dominated {
                self.front.push(cand);
                self.front_values.extend_from_slice(row);
            }
        }
        self.front.sort_unstable();
        &self.front
    }
}

fn lexicographic_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.partial_cmp(x).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// `w >= r` elementwise and not equal, i.e. `w` dominates `r`.
#[inline]
fn weakly_dominates_distinct(w: &[f64], r: &[f64]) -> bool {
    let mut strict = false;
    for (a, b) in w.iter().zip(r) {
        if a < b {
            return false;
        }
        strict |= a > b;
    }
    strict
}
