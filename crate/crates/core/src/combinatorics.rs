//! Lexicographic enumeration, ranking and unranking of objective subsets.
//!
//! Indices are 1-based throughout, ranks `k` run from 1 to `C(m, s)`. The
//! lexicographic order fixed here is the one every checkpoint refers to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_OBJECTIVES: usize = 64;

/// Exact `C(m, s)` for `m <= 64`.
pub fn binomial(m: usize, s: usize) -> Result<u64> {
    if m > MAX_OBJECTIVES {
        return Err(Error::Overflow { m, s });
    }
    if s > m {
        return Ok(0);
    }
    let s = s.min(m - s);
    let mut c: u128 = 1;
    for i in 0..s {
        // exact at every step: c * (m - i) is divisible by (i + 1)
        c = c * (m - i) as u128 / (i as u128 + 1);
    }
    u64::try_from(c).map_err(|_| Error::Overflow { m, s })
}

/// `C(m, s)` for arguments already validated against [`MAX_OBJECTIVES`].
pub(crate) fn choose(m: usize, s: usize) -> u64 {
    binomial(m, s).expect("m <= 64")
}

/// Number of non-empty subsets of `m` objectives, `2^m - 1`.
pub fn total_subsets(m: usize) -> Result<u64> {
    (1..=m).try_fold(0u64, |acc, s| {
        acc.checked_add(binomial(m, s)?)
            .ok_or(Error::Overflow { m, s })
    })
}

/// One index set `L_{s,k}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CombinationSet {
    /// Strictly increasing, 1-based.
    pub indices: Vec<usize>,
    /// 1-based lexicographic rank within its length.
    pub rank: u64,
}

impl CombinationSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Zero-based column offsets.
    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().map(|i| i - 1)
    }

    /// Bit `j` set for zero-based column `j`.
    pub fn mask(&self) -> u64 {
        self.columns().fold(0u64, |acc, j| acc | (1u64 << j))
    }

    /// Build from arbitrary 1-based indices, computing the rank.
    pub fn from_indices(m: usize, indices: &[usize]) -> Result<Self> {
        let rank = rank(m, indices)?;
        Ok(CombinationSet {
            indices: indices.to_vec(),
            rank,
        })
    }
}

fn check_length(m: usize, s: usize) -> Result<()> {
    if m > MAX_OBJECTIVES {
        return Err(Error::Overflow { m, s });
    }
    if s == 0 || s > m {
        return Err(Error::InvalidArgument(format!(
            "combination length {s} outside 1..={m}"
        )));
    }
    Ok(())
}

/// Lexicographic rank (1-based) of a strictly increasing 1-based index set.
pub fn rank(m: usize, indices: &[usize]) -> Result<u64> {
    let s = indices.len();
    check_length(m, s)?;
    let mut prev = 0;
    for &i in indices {
        if i <= prev || i > m {
            return Err(Error::InvalidArgument(format!(
                "indices {indices:?} are not strictly increasing within 1..={m}"
            )));
        }
        prev = i;
    }
    let mut k = 1u64;
    let mut start = 1;
    for (pos, &i) in indices.iter().enumerate() {
        let remaining = s - pos - 1;
        for c in start..i {
            k += choose(m - c, remaining);
        }
        start = i + 1;
    }
    Ok(k)
}

/// The `k`-th (1-based) length-`s` subset of `1..=m` in lexicographic order.
pub fn unrank(m: usize, s: usize, k: u64) -> Result<CombinationSet> {
    check_length(m, s)?;
    let max = choose(m, s);
    if k == 0 || k > max {
        return Err(Error::RankOutOfRange { m, s, k, max });
    }
    let mut remaining_k = k;
    let mut indices = Vec::with_capacity(s);
    let mut c = 1;
    for pos in 0..s {
        let rest = s - pos - 1;
        loop {
            let block = choose(m - c, rest);
            if remaining_k <= block {
                break;
            }
            remaining_k -= block;
            c += 1;
        }
        indices.push(c);
        c += 1;
    }
    Ok(CombinationSet { indices, rank: k })
}

/// Lexicographic stream of all length-`s` subsets, optionally starting at a
/// rank other than 1.
#[derive(Debug, Clone)]
pub struct Combinations {
    m: usize,
    current: Option<Vec<usize>>,
    rank: u64,
    end: u64,
}

impl Combinations {
    pub fn new(m: usize, s: usize) -> Result<Self> {
        check_length(m, s)?;
        Self::range(m, s, 1, choose(m, s))
    }

    /// Ranks `first..=last`.
    pub fn range(m: usize, s: usize, first: u64, last: u64) -> Result<Self> {
        check_length(m, s)?;
        let max = choose(m, s);
        if first == 0 || first > max + 1 || last > max {
            return Err(Error::RankOutOfRange {
                m,
                s,
                k: first.max(last),
                max,
            });
        }
        let current = if first <= last {
            Some(unrank(m, s, first)?.indices)
        } else {
            None
        };
        Ok(Combinations {
            m,
            current,
            rank: first,
            end: last,
        })
    }

    /// Advance `indices` to its lexicographic successor; false when exhausted.
    pub fn advance(m: usize, indices: &mut [usize]) -> bool {
        let s = indices.len();
        let mut pos = s;
        while pos > 0 {
            pos -= 1;
            if indices[pos] < m - (s - 1 - pos) {
                indices[pos] += 1;
                for q in pos + 1..s {
                    indices[q] = indices[q - 1] + 1;
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for Combinations {
    type Item = CombinationSet;

    fn next(&mut self) -> Option<CombinationSet> {
        if self.rank > self.end {
            return None;
        }
        let indices = self.current.as_mut()?;
        let out = CombinationSet {
            indices: indices.clone(),
            rank: self.rank,
        };
        self.rank += 1;
        if self.rank <= self.end && !Self::advance(self.m, indices) {
            self.current = None;
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end + 1).saturating_sub(self.rank) as usize;
        (left, Some(left))
    }
}

pub fn enumerate_combinations(m: usize, s: usize) -> Result<Combinations> {
    Combinations::new(m, s)
}
