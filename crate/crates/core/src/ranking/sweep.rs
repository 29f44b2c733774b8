//! Parallel, checkpointed accumulation.
//!
//! The rank range of each length is cut into fixed blocks of
//! [`BLOCK_COMBINATIONS`] consecutive subsets. A block's observation mass is
//! summed locally, then blocks are merged into the accumulator strictly in
//! ascending order. Block boundaries do not depend on the worker count, so
//! the floating-point summation order, and therefore every output bit, is
//! the same for 1 or 100 workers and for any resume point.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use super::{LengthAccumulator, RankResult};
use crate::checkpoint::{self, TimingRow};
use crate::combinatorics::{unrank, Combinations, MAX_OBJECTIVES};
use crate::dataset::{AliasMap, ScaledMatrix};
use crate::error::{Error, Result};
use crate::pareto::FrontFinder;

/// Subsets per merge block.
pub const BLOCK_COMBINATIONS: u64 = 32;

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Inclusive `(first, last)` lengths; `None` means `1..=m`.
    pub lengths: Option<(usize, usize)>,
    pub workers: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Subsets between checkpoints, rounded up to whole blocks.
    pub stride: u64,
    /// Stop (after checkpointing) once this many subsets were processed in
    /// this call. Rounded up to whole blocks.
    pub budget: Option<u64>,
    #[doc(hidden)]
    pub fail_at_rank: Option<(usize, u64)>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lengths: None,
            workers: 1,
            checkpoint_dir: None,
            stride: 100_000,
            budget: None,
            fail_at_rank: None,
        }
    }
}

impl SweepConfig {
    fn length_range(&self, m: usize) -> Result<(usize, usize)> {
        let (lo, hi) = self.lengths.unwrap_or((1, m));
        if lo == 0 || lo > hi || hi > m {
            return Err(Error::InvalidArgument(format!(
                "lengths {lo}..={hi} not within 1..={m}"
            )));
        }
        Ok((lo, hi))
    }
}

fn round_to_blocks(x: u64) -> u64 {
    x.div_ceil(BLOCK_COMBINATIONS)
        .max(1)
        .saturating_mul(BLOCK_COMBINATIONS)
}

struct Scratch {
    finder: FrontFinder,
    nr: Vec<f64>,
    oc: Vec<u32>,
    touched: Vec<u32>,
    columns: Vec<usize>,
}

impl Scratch {
    fn new(n: usize, m: usize) -> Self {
        Scratch {
            finder: FrontFinder::new(),
            nr: vec![0.0; n],
            oc: vec![0; n * m],
            touched: Vec::new(),
            columns: Vec::new(),
        }
    }
}

/// Sparse per-block sums: one entry per site that made any front.
struct BlockSums {
    sites: Vec<u32>,
    nr: Vec<f64>,
    /// `sites.len() x m` contribution counts.
    oc: Vec<u32>,
}

fn process_block(
    matrix: &ScaledMatrix,
    s: usize,
    first: u64,
    last: u64,
    scratch: &mut Scratch,
    fail_at: Option<u64>,
) -> BlockSums {
    let m = matrix.m();
    let mut indices = unrank(m, s, first).expect("rank within range").indices;
    let mut k = first;
    loop {
        if fail_at == Some(k) {
            panic!("injected failure at rank {k}");
        }
        scratch.columns.clear();
        scratch.columns.extend(indices.iter().map(|i| i - 1));
        let front = scratch.finder.front(matrix, &scratch.columns);
        let share = 1.0 / front.len() as f64;
        for &i in front {
            let iu = i as usize;
            if scratch.nr[iu] == 0.0 {
                scratch.touched.push(i);
            }
            scratch.nr[iu] += share;
            let row = &mut scratch.oc[iu * m..(iu + 1) * m];
            for &j in &scratch.columns {
                row[j] += 1;
            }
        }
        if k == last {
            break;
        }
        k += 1;
        Combinations::advance(m, &mut indices);
    }

    scratch.touched.sort_unstable();
    let mut out = BlockSums {
        sites: Vec::with_capacity(scratch.touched.len()),
        nr: Vec::with_capacity(scratch.touched.len()),
        oc: Vec::with_capacity(scratch.touched.len() * m),
    };
    for &i in &scratch.touched {
        let iu = i as usize;
        out.sites.push(i);
        out.nr.push(std::mem::take(&mut scratch.nr[iu]));
        let row = &mut scratch.oc[iu * m..(iu + 1) * m];
        out.oc.extend_from_slice(row);
        row.fill(0);
    }
    scratch.touched.clear();
    out
}

fn merge(acc: &mut LengthAccumulator, block: &BlockSums) {
    let m = acc.m;
    for (pos, &i) in block.sites.iter().enumerate() {
        let iu = i as usize;
        acc.nr_row[iu] += block.nr[pos];
        let dst = &mut acc.oc[iu * m..(iu + 1) * m];
        for (d, &c) in dst.iter_mut().zip(&block.oc[pos * m..(pos + 1) * m]) {
            *d += c as u64;
        }
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .thread_name(|i| format!("sweep-{i}"))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

/// Advance `acc` by up to `limit` subsets (whole blocks), calling
/// `on_stride` each time another `stride` subsets have been merged.
#[allow(clippy::too_many_arguments)]
fn advance_length(
    matrix: &ScaledMatrix,
    acc: &mut LengthAccumulator,
    pool: &rayon::ThreadPool,
    workers: usize,
    stride: u64,
    limit: u64,
    fail_at: Option<u64>,
    mut on_stride: impl FnMut(&LengthAccumulator) -> Result<()>,
) -> Result<()> {
    let (n, m, s) = (matrix.n(), matrix.m(), acc.s);
    let total = acc.total();
    let stop = total.min(acc.combos_done.saturating_add(limit));
    let stride = round_to_blocks(stride);
    let wave = (workers.max(1) as u64) * 4;
    let mut next_save = (acc.combos_done / stride + 1).saturating_mul(stride);

    while acc.combos_done < stop {
        let started = Instant::now();
        let first_block = acc.combos_done / BLOCK_COMBINATIONS;
        let last_block = (stop - 1) / BLOCK_COMBINATIONS;
        let blocks: Vec<(u64, u64)> = (first_block..=last_block.min(first_block + wave - 1))
            .map(|b| {
                let lo = b * BLOCK_COMBINATIONS + 1;
                let hi = ((b + 1) * BLOCK_COMBINATIONS).min(total);
                (lo, hi)
            })
            .collect();

        let results: Vec<std::result::Result<BlockSums, Error>> = pool.install(|| {
            blocks
                .par_iter()
                .map_init(
                    || Scratch::new(n, m),
                    |scratch, &(lo, hi)| {
                        let fail = fail_at.filter(|k| (lo..=hi).contains(k));
                        catch_unwind(AssertUnwindSafe(|| {
                            process_block(matrix, s, lo, hi, scratch, fail)
                        }))
                        .map_err(|payload| {
                            // scratch may be half-updated; start clean
                            *scratch = Scratch::new(n, m);
                            Error::WorkerPanic {
                                s,
                                k_start: lo,
                                k_end: hi,
                                message: panic_message(payload),
                            }
                        })
                    },
                )
                .collect()
        });

        for (block, result) in blocks.iter().zip(results) {
            let sums = result?;
            merge(acc, &sums);
            acc.combos_done = block.1;
        }
        acc.elapsed_seconds += started.elapsed().as_secs_f64();

        if acc.combos_done >= next_save && acc.combos_done < total {
            on_stride(acc)?;
            next_save = (acc.combos_done / stride + 1).saturating_mul(stride);
        }
    }
    Ok(())
}

fn check_resume(matrix: &ScaledMatrix, s: usize, resume: &LengthAccumulator) -> Result<()> {
    if resume.s != s {
        return Err(Error::ResumeLengthMismatch {
            expected: s,
            found: resume.s,
        });
    }
    if resume.n != matrix.n() || resume.m != matrix.m() {
        return Err(Error::ResumeMismatch(format!(
            "accumulator is {}x{}, matrix is {}x{}",
            resume.n,
            resume.m,
            matrix.n(),
            matrix.m()
        )));
    }
    if resume.nr_row.len() != resume.n || resume.oc.len() != resume.n * resume.m {
        return Err(Error::ResumeMismatch(
            "buffer sizes do not match shape".into(),
        ));
    }
    if resume.combos_done > resume.total()
        || (!resume.combos_done.is_multiple_of(BLOCK_COMBINATIONS) && !resume.is_complete())
    {
        return Err(Error::ResumeMismatch(format!(
            "{} combinations done is not a block boundary",
            resume.combos_done
        )));
    }
    Ok(())
}

fn check_length(matrix: &ScaledMatrix, s: usize) -> Result<()> {
    if matrix.m() > MAX_OBJECTIVES {
        return Err(Error::Overflow { m: matrix.m(), s });
    }
    if s == 0 || s > matrix.m() {
        return Err(Error::InvalidArgument(format!(
            "combination length {s} outside 1..={}",
            matrix.m()
        )));
    }
    Ok(())
}

/// Single-threaded accumulation of every subset of length `s`, optionally
/// continuing from a partial accumulator.
pub fn accumulate_length(
    matrix: &ScaledMatrix,
    s: usize,
    resume: Option<LengthAccumulator>,
) -> Result<LengthAccumulator> {
    accumulate_length_with(matrix, s, resume, 1)
}

pub fn accumulate_length_with(
    matrix: &ScaledMatrix,
    s: usize,
    resume: Option<LengthAccumulator>,
    workers: usize,
) -> Result<LengthAccumulator> {
    check_length(matrix, s)?;
    let mut acc = match resume {
        Some(r) => {
            check_resume(matrix, s, &r)?;
            r
        }
        None => LengthAccumulator::new(matrix.n(), matrix.m(), s),
    };
    let pool = build_pool(workers)?;
    advance_length(
        matrix,
        &mut acc,
        &pool,
        workers,
        u64::MAX,
        u64::MAX,
        None,
        |_| Ok(()),
    )?;
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct SweepProgress {
    /// One accumulator per requested length that was reached, ascending `s`.
    pub accumulators: Vec<LengthAccumulator>,
    /// Every requested length finished.
    pub complete: bool,
}

/// Run (or resume) the requested lengths, checkpointing to
/// `config.checkpoint_dir` when set.
pub fn sweep_lengths(matrix: &ScaledMatrix, config: &SweepConfig) -> Result<SweepProgress> {
    let m = matrix.m();
    if m > MAX_OBJECTIVES {
        return Err(Error::Overflow { m, s: 0 });
    }
    let (lo, hi) = config.length_range(m)?;
    let fingerprint = matrix.fingerprint();
    let pool = build_pool(config.workers)?;
    let mut budget = config.budget.map(round_to_blocks).unwrap_or(u64::MAX);
    let mut accumulators = Vec::new();

    for s in lo..=hi {
        let resumed = match &config.checkpoint_dir {
            Some(dir) => checkpoint::load(dir, s, &fingerprint)?,
            None => None,
        };
        let mut acc = match resumed {
            Some(acc) => {
                check_resume(matrix, s, &acc)?;
                acc
            }
            None => LengthAccumulator::new(matrix.n(), m, s),
        };
        if acc.is_complete() {
            log::info!("length {s}: complete in checkpoint, skipping");
            accumulators.push(acc);
            continue;
        }
        if budget == 0 {
            return Ok(SweepProgress {
                accumulators,
                complete: false,
            });
        }

        let before = acc.combos_done;
        let fail_at = config
            .fail_at_rank
            .filter(|(fs, _)| *fs == s)
            .map(|(_, k)| k);
        let dir = config.checkpoint_dir.as_deref();
        advance_length(
            matrix,
            &mut acc,
            &pool,
            config.workers,
            config.stride,
            budget,
            fail_at,
            |partial| match dir {
                Some(d) => checkpoint::save(partial, d, &fingerprint).map(|_| ()),
                None => Ok(()),
            },
        )?;
        budget = budget.saturating_sub(acc.combos_done - before);

        if let Some(dir) = dir {
            checkpoint::save(&acc, dir, &fingerprint)?;
            if acc.is_complete() {
                checkpoint::record_timing(
                    dir,
                    TimingRow {
                        s,
                        elapsed_seconds: acc.elapsed_seconds,
                        combinations: acc.total(),
                    },
                )?;
            }
        }
        log::info!(
            "length {s}: {}/{} subsets, {:.3}s",
            acc.combos_done,
            acc.total(),
            acc.elapsed_seconds
        );
        let done = acc.is_complete();
        accumulators.push(acc);
        if !done {
            return Ok(SweepProgress {
                accumulators,
                complete: false,
            });
        }
    }
    Ok(SweepProgress {
        accumulators,
        complete: true,
    })
}

/// Combine completed accumulators (topping up from the checkpoint directory
/// for lengths not in `accumulators`) into the final result.
pub fn finalize(
    matrix: &ScaledMatrix,
    aliases: &AliasMap,
    accumulators: Vec<LengthAccumulator>,
    checkpoint_dir: Option<&std::path::Path>,
) -> Result<RankResult> {
    let m = matrix.m();
    let mut by_length: Vec<Option<LengthAccumulator>> = vec![None; m];
    for acc in accumulators {
        if acc.s >= 1 && acc.s <= m {
            let s = acc.s;
            by_length[s - 1] = Some(acc);
        }
    }
    if let Some(dir) = checkpoint_dir {
        let fingerprint = matrix.fingerprint();
        for s in 1..=m {
            if by_length[s - 1].as_ref().is_some_and(|a| a.is_complete()) {
                continue;
            }
            if let Some(acc) = checkpoint::load(dir, s, &fingerprint)? {
                by_length[s - 1] = Some(acc);
            }
        }
    }
    let missing: Vec<usize> = (1..=m)
        .filter(|&s| !by_length[s - 1].as_ref().is_some_and(|a| a.is_complete()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteSweep { missing });
    }
    let accumulators: Vec<LengthAccumulator> = by_length.into_iter().flatten().collect();
    RankResult::from_accumulators(matrix, aliases, &accumulators)
}

/// Sweep `config.lengths` and assemble the full result. Lengths outside the
/// requested range must already be complete in the checkpoint directory.
pub fn run_sweep(
    matrix: &ScaledMatrix,
    aliases: &AliasMap,
    config: &SweepConfig,
) -> Result<RankResult> {
    let progress = sweep_lengths(matrix, config)?;
    if !progress.complete {
        let (lo, hi) = config.length_range(matrix.m())?;
        let finished: Vec<usize> = progress
            .accumulators
            .iter()
            .filter(|a| a.is_complete())
            .map(|a| a.s)
            .collect();
        return Err(Error::IncompleteSweep {
            missing: (lo..=hi).filter(|s| !finished.contains(s)).collect(),
        });
    }
    finalize(
        matrix,
        aliases,
        progress.accumulators,
        config.checkpoint_dir.as_deref(),
    )
}
