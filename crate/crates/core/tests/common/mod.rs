//! Dense reference implementation used as an oracle: materializes every
//! subset as a bitmask, every front as a full 0/1 mask and every
//! contribution matrix, then sums.

#![allow(dead_code)]

use siting_core::dataset::{AliasMap, ScaledMatrix};
use siting_core::ranking::{
    contributions, sweep_lengths, LengthAccumulator, RankResult, SweepConfig,
};

pub struct Dense {
    pub n: usize,
    pub m: usize,
    /// `nr[s - 1][i]`
    pub nr: Vec<Vec<f64>>,
    /// `oc[s - 1][i * m + j]`
    pub oc: Vec<Vec<u64>>,
    pub sr: Vec<f64>,
    pub metric: Vec<f64>,
    pub nc: Vec<Vec<f64>>,
    pub s_matrix: Vec<f64>,
    pub sc: Vec<f64>,
}

/// `a` dominates `b` on `cols` under maximization.
pub fn dominates(a: &[f64], b: &[f64], cols: &[usize]) -> bool {
    cols.iter().all(|&j| a[j] >= b[j]) && cols.iter().any(|&j| a[j] > b[j])
}

pub fn front_mask(rows: &[Vec<f64>], cols: &[usize]) -> Vec<u8> {
    (0..rows.len())
        .map(|i| {
            let dominated = (0..rows.len()).any(|k| k != i && dominates(&rows[k], &rows[i], cols));
            (!dominated) as u8
        })
        .collect()
}

pub fn rows_of(matrix: &ScaledMatrix) -> Vec<Vec<f64>> {
    (0..matrix.n()).map(|i| matrix.row(i).to_vec()).collect()
}

fn row_normalize(v: &[f64], m: usize) -> Vec<f64> {
    v.chunks(m)
        .flat_map(|row| {
            let t: f64 = row.iter().sum();
            row.iter().map(move |x| if t > 0.0 { x / t } else { 0.0 })
        })
        .collect()
}

pub fn dense(matrix: &ScaledMatrix) -> Dense {
    let rows = rows_of(matrix);
    let (n, m) = (matrix.n(), matrix.m());
    let mut nr = vec![vec![0.0; n]; m];
    let mut oc = vec![vec![0u64; n * m]; m];
    for mask in 1u64..(1u64 << m) {
        let cols: Vec<usize> = (0..m).filter(|j| mask >> j & 1 == 1).collect();
        let s = cols.len();
        let front = front_mask(&rows, &cols);
        let size: f64 = front.iter().map(|&v| v as f64).sum();
        // outer product of the mask with the subset indicator
        for i in 0..n {
            for j in 0..m {
                let indicator = mask >> j & 1;
                oc[s - 1][i * m + j] += front[i] as u64 * indicator;
            }
            nr[s - 1][i] += front[i] as f64 / size;
        }
    }
    let sr: Vec<f64> = (0..n).map(|i| (0..m).map(|s| nr[s][i]).sum()).collect();
    let lo = sr.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let metric = sr
        .iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect();
    let nc: Vec<Vec<f64>> = oc
        .iter()
        .map(|o| row_normalize(&o.iter().map(|&c| c as f64).collect::<Vec<_>>(), m))
        .collect();
    let mut s_matrix = vec![0.0; n * m];
    for layer in &nc {
        for (t, v) in s_matrix.iter_mut().zip(layer) {
            *t += v;
        }
    }
    let sc = row_normalize(&s_matrix, m);
    Dense {
        n,
        m,
        nr,
        oc,
        sr,
        metric,
        nc,
        s_matrix,
        sc,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn binomial(m: u64, s: u64) -> u64 {
    // independent of the library: multiplicative formula in u128
    let mut r: u128 = 1;
    for i in 0..s as u128 {
        r = r * (m as u128 - i) / (i + 1);
    }
    r as u64
}

pub fn accumulators(matrix: &ScaledMatrix, workers: usize) -> Vec<LengthAccumulator> {
    let config = SweepConfig {
        workers,
        ..SweepConfig::default()
    };
    let progress = sweep_lengths(matrix, &config).unwrap();
    assert!(progress.complete);
    progress.accumulators
}

/// Largest elementwise gap between the streaming sweep and the dense
/// oracle over NR, SR, M, NC, S and SC; OC counts must match exactly.
pub fn oracle_gap(matrix: &ScaledMatrix, workers: usize) -> Result<f64, String> {
    let d = dense(matrix);
    let accs = accumulators(matrix, workers);
    let result = RankResult::from_accumulators(matrix, &AliasMap::default(), &accs)
        .map_err(|e| e.to_string())?;
    let contrib = contributions(&accs).map_err(|e| e.to_string())?;
    let mut gap: f64 = 0.0;
    for (s, acc) in accs.iter().enumerate() {
        if acc.oc != d.oc[s] {
            return Err(format!("OC differs at s = {}", s + 1));
        }
        gap = gap.max(max_abs_diff(&acc.nr_row, &d.nr[s]));
        gap = gap.max(max_abs_diff(&contrib.nc_by_length[s], &d.nc[s]));
    }
    let sr: Vec<f64> = result.sites.iter().map(|x| x.sr).collect();
    let metric: Vec<f64> = result.sites.iter().map(|x| x.metric).collect();
    let sc: Vec<f64> = result.sites.iter().flat_map(|x| x.sc.clone()).collect();
    gap = gap.max(max_abs_diff(&sr, &d.sr));
    gap = gap.max(max_abs_diff(&metric, &d.metric));
    gap = gap.max(max_abs_diff(&contrib.s_matrix, &d.s_matrix));
    gap = gap.max(max_abs_diff(&sc, &d.sc));
    Ok(gap)
}

/// Normalization invariants of a completed sweep.
pub fn check_invariants(matrix: &ScaledMatrix) -> Result<(), String> {
    let m = matrix.m();
    let accs = accumulators(matrix, 2);
    for acc in &accs {
        let sum: f64 = acc.nr_row.iter().sum();
        let want = binomial(m as u64, acc.s as u64) as f64;
        if (sum - want).abs() > 1e-9 {
            return Err(format!(
                "sum of NR at s = {} is {sum}, expected {want}",
                acc.s
            ));
        }
    }
    let cols: Vec<usize> = (0..m).collect();
    let front = front_mask(&rows_of(matrix), &cols);
    let size = front.iter().filter(|&&b| b == 1).count() as f64;
    let last = &accs[m - 1];
    for (i, &f) in front.iter().enumerate() {
        let want = f as f64 / size;
        if last.nr_row[i] != want {
            return Err(format!(
                "NR at s = m for site {i} is {}, expected {want}",
                last.nr_row[i]
            ));
        }
    }
    let contrib = contributions(&accs).map_err(|e| e.to_string())?;
    for i in 0..matrix.n() {
        let row = contrib.sc_row(i);
        let total: f64 = row.iter().sum();
        if row.iter().any(|&v| v != 0.0) && (total - 1.0).abs() > 1e-12 {
            return Err(format!("SC row {i} sums to {total}"));
        }
        if row.iter().any(|&v| v < 0.0) {
            return Err(format!("SC row {i} has a negative entry"));
        }
    }
    Ok(())
}
