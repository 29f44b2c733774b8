//! Observation-ratio and objective-contribution accumulation over every
//! objective subset, and the siting metric built from it.
//!
//! For each length `s` and each subset `L_{s,k}` the first front is found;
//! every front member `i` receives `1 / |front|` observation mass (so each
//! subset distributes total mass 1) and one contribution count for every
//! column of the subset. The per-subset masks and contribution matrices are
//! never stored; only the running sums in [`LengthAccumulator`] are.

mod export;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::combinatorics::{choose, CombinationSet};
use crate::dataset::{AliasMap, ScaledMatrix};
use crate::error::{Error, Result};
use crate::pareto::ParetoMask;

pub use export::{read_scores_csv, write_scores_csv, ScoreRow, SiteMeta};
pub use sweep::{
    accumulate_length, accumulate_length_with, finalize, run_sweep, sweep_lengths, SweepConfig,
    SweepProgress, BLOCK_COMBINATIONS,
};

/// Running sums for one combination length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthAccumulator {
    pub s: usize,
    pub m: usize,
    pub n: usize,
    /// Normalized observation ratio per site.
    pub nr_row: Vec<f64>,
    /// Contribution counts, n x m row-major.
    pub oc: Vec<u64>,
    pub combos_done: u64,
    pub elapsed_seconds: f64,
}

impl LengthAccumulator {
    pub fn new(n: usize, m: usize, s: usize) -> Self {
        LengthAccumulator {
            s,
            m,
            n,
            nr_row: vec![0.0; n],
            oc: vec![0; n * m],
            combos_done: 0,
            elapsed_seconds: 0.0,
        }
    }

    pub fn total(&self) -> u64 {
        choose(self.m, self.s)
    }

    pub fn is_complete(&self) -> bool {
        self.combos_done == self.total()
    }

    pub fn oc_row(&self, i: usize) -> &[u64] {
        &self.oc[i * self.m..(i + 1) * self.m]
    }

    /// Same numbers, ignoring wall-clock time.
    pub fn same_state(&self, other: &LengthAccumulator) -> bool {
        self.s == other.s
            && self.m == other.m
            && self.n == other.n
            && self.combos_done == other.combos_done
            && self.oc == other.oc
            && self
                .nr_row
                .iter()
                .zip(&other.nr_row)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitingScores {
    pub site_ids: Vec<String>,
    /// Summed normalized observation ratio.
    pub sr: Vec<f64>,
    /// `sr` min-max scaled to [0, 1].
    pub metric: Vec<f64>,
    /// `sr` was constant; `metric` is all zeros.
    pub degenerate: bool,
}

fn check_complete(accumulators: &[LengthAccumulator]) -> Result<(usize, usize)> {
    let first = accumulators
        .first()
        .ok_or_else(|| Error::InvalidArgument("no accumulators".into()))?;
    let (n, m) = (first.n, first.m);
    let mut seen = vec![false; m];
    for acc in accumulators {
        if acc.n != n || acc.m != m {
            return Err(Error::InvalidArgument(
                "accumulators disagree on matrix shape".into(),
            ));
        }
        if !acc.is_complete() {
            return Err(Error::IncompleteAccumulator {
                s: acc.s,
                done: acc.combos_done,
                total: acc.total(),
            });
        }
        if acc.s == 0 || acc.s > m || std::mem::replace(&mut seen[acc.s - 1], true) {
            return Err(Error::InvalidArgument(format!(
                "length {} missing, repeated or out of range",
                acc.s
            )));
        }
    }
    let missing: Vec<usize> = (1..=m).filter(|s| !seen[s - 1]).collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteSweep { missing });
    }
    Ok((n, m))
}

fn sorted_by_length(accumulators: &[LengthAccumulator]) -> Vec<&LengthAccumulator> {
    let mut v: Vec<&LengthAccumulator> = accumulators.iter().collect();
    v.sort_by_key(|a| a.s);
    v
}

/// `SR = sum_s NR_s`, then min-max scaling. Needs one complete accumulator
/// for every length `1..=m`.
pub fn siting_metric(
    accumulators: &[LengthAccumulator],
    site_ids: &[String],
) -> Result<SitingScores> {
    let (n, _) = check_complete(accumulators)?;
    if site_ids.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} site ids for {n} sites",
            site_ids.len()
        )));
    }
    let mut sr = vec![0.0; n];
    for acc in sorted_by_length(accumulators) {
        for (total, v) in sr.iter_mut().zip(&acc.nr_row) {
            *total += v;
        }
    }
    let (metric, degenerate) = min_max(&sr);
    if degenerate {
        log::warn!("summed observation ratio is constant across sites; metric set to 0");
    }
    Ok(SitingScores {
        site_ids: site_ids.to_vec(),
        sr,
        metric,
        degenerate,
    })
}

/// Min-max scale; a constant input maps to zeros and reports `true`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn min_max(values: &[f64]) -> (Vec<f64>, bool) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    // also catches NaN
    if !(range > 0.0) {
        return (vec![0.0; values.len()], true);
    }
    (values.iter().map(|v| (v - lo) / range).collect(), false)
}

/// Divide each row by its sum; all-zero rows stay zero.
pub fn normalize_rows(values: &[f64], cols: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    for row in out.chunks_exact_mut(cols) {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            for v in row.iter_mut() {
                *v /= total;
            }
        }
    }
    out
}

/// Contribution matrix of a single subset: the outer product of its front
/// mask with the subset's column indicator, row-major `n x m`. The sweep
/// accumulates these sparsely; this dense form is for inspection.
pub fn subset_contribution(front: &ParetoMask, idx: &CombinationSet, m: usize) -> Vec<u8> {
    let mut out = vec![0u8; front.len() * m];
    for i in front.members() {
        for j in idx.columns() {
            out[i * m + j] = 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionResult {
    pub n: usize,
    pub m: usize,
    /// Row-normalized contributions per length (index `s - 1`), n x m each.
    pub nc_by_length: Vec<Vec<f64>>,
    /// Sum of `nc_by_length` over lengths.
    pub s_matrix: Vec<f64>,
    /// `s_matrix` row-normalized.
    pub sc: Vec<f64>,
}

impl ContributionResult {
    pub fn sc_row(&self, i: usize) -> &[f64] {
        &self.sc[i * self.m..(i + 1) * self.m]
    }
}

pub fn contributions(accumulators: &[LengthAccumulator]) -> Result<ContributionResult> {
    let (n, m) = check_complete(accumulators)?;
    let mut nc_by_length = Vec::with_capacity(m);
    let mut s_matrix = vec![0.0; n * m];
    for acc in sorted_by_length(accumulators) {
        let oc: Vec<f64> = acc.oc.iter().map(|&c| c as f64).collect();
        let nc = normalize_rows(&oc, m);
        for (total, v) in s_matrix.iter_mut().zip(&nc) {
            *total += v;
        }
        nc_by_length.push(nc);
    }
    let sc = normalize_rows(&s_matrix, m);
    Ok(ContributionResult {
        n,
        m,
        nc_by_length,
        s_matrix,
        sc,
    })
}

/// Population variance of the observation ratio across sites, per length
/// (element `s - 1`).
pub fn variance_by_length(accumulators: &[LengthAccumulator]) -> Vec<f64> {
    sorted_by_length(accumulators)
        .into_iter()
        .map(|acc| population_variance(&acc.nr_row))
        .collect()
}

pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Scores for one site. Sites removed by deduplication carry the numbers of
/// their kept representative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteScore {
    pub site_id: String,
    pub representative: String,
    pub sr: f64,
    pub metric: f64,
    pub sc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub objective_names: Vec<String>,
    pub dataset_fingerprint: String,
    /// Deduplicated site ids, aligned with `nr_by_length` columns.
    pub kept_ids: Vec<String>,
    /// Observation ratio per length (index `s - 1`) and kept site.
    pub nr_by_length: Vec<Vec<f64>>,
    pub variance_by_length: Vec<f64>,
    pub degenerate_metric: bool,
    /// Kept sites in matrix order, each followed by its aliases.
    pub sites: Vec<SiteScore>,
}

impl RankResult {
    pub fn from_accumulators(
        matrix: &ScaledMatrix,
        aliases: &AliasMap,
        accumulators: &[LengthAccumulator],
    ) -> Result<Self> {
        let scores = siting_metric(accumulators, matrix.site_ids())?;
        let contrib = contributions(accumulators)?;
        let m = matrix.m();
        let mut sites = Vec::with_capacity(matrix.n() + aliases.removed_count());
        for (i, id) in matrix.site_ids().iter().enumerate() {
            let score = SiteScore {
                site_id: id.clone(),
                representative: id.clone(),
                sr: scores.sr[i],
                metric: scores.metric[i],
                sc: contrib.sc[i * m..(i + 1) * m].to_vec(),
            };
            let backfilled: Vec<SiteScore> = aliases
                .removed_of(id)
                .iter()
                .map(|alias| SiteScore {
                    site_id: alias.clone(),
                    ..score.clone()
                })
                .collect();
            sites.push(score);
            sites.extend(backfilled);
        }
        Ok(RankResult {
            objective_names: matrix.spec().names().map(str::to_string).collect(),
            dataset_fingerprint: matrix.fingerprint_hex(),
            kept_ids: matrix.site_ids().to_vec(),
            nr_by_length: sorted_by_length(accumulators)
                .into_iter()
                .map(|a| a.nr_row.clone())
                .collect(),
            variance_by_length: variance_by_length(accumulators),
            degenerate_metric: scores.degenerate,
            sites,
        })
    }

    pub fn m(&self) -> usize {
        self.objective_names.len()
    }

    pub fn site(&self, id: &str) -> Option<&SiteScore> {
        self.sites.iter().find(|s| s.site_id == id)
    }

    /// Indices into `sites`, best metric first; ties keep input order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.sites.len()).collect();
        order.sort_by(|&a, &b| self.sites[b].metric.total_cmp(&self.sites[a].metric));
        order
    }

    /// Kept-site ids ordered by metric, best first.
    pub fn top_kept(&self, count: usize) -> Vec<usize> {
        let index: std::collections::HashMap<&str, usize> = self
            .kept_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        self.ranking()
            .into_iter()
            .filter(|&r| self.sites[r].site_id == self.sites[r].representative)
            .filter_map(|r| index.get(self.sites[r].site_id.as_str()).copied())
            .take(count)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
