use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use siting_core::ranking::{finalize, sweep_lengths, write_scores_csv, SiteMeta, SweepConfig};
use siting_core::Error;

use crate::ingest::load_dataset;
use crate::manifest::RunManifest;
use crate::{create_dir, usage};

pub const RESULT_FILE: &str = "result.json";
pub const SCORES_FILE: &str = "scores.csv";

#[derive(clap::Args)]
pub struct Args {
    /// Dataset written by `ingest` (file or directory).
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Inclusive range of subset lengths to sweep, e.g. `1-3`. Default: all.
    #[arg(long, value_parser = parse_lengths)]
    lengths: Option<(usize, usize)>,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Directory for resumable progress files.
    #[arg(long, env = "SITING_CHECKPOINT_DIR")]
    checkpoint_dir: Option<PathBuf>,
    /// Subsets between checkpoints.
    #[arg(long, default_value_t = 100_000)]
    stride: u64,
    /// Stop after this many subsets (checkpointing first).
    #[arg(long)]
    budget: Option<u64>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn parse_lengths(s: &str) -> Result<(usize, usize), String> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    match s.split_once('-') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let v = parse(s)?;
            Ok((v, v))
        }
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if args.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    if args.stride == 0 {
        return Err(usage("--stride must be at least 1"));
    }
    let dataset = load_dataset(&args.dataset)?;
    let m = dataset.scaled.m();
    if let Some((lo, hi)) = args.lengths {
        if lo == 0 || lo > hi || hi > m {
            return Err(usage(format!("--lengths {lo}-{hi} is not within 1-{m}")));
        }
    }
    if (args.lengths.is_some() || args.budget.is_some()) && args.checkpoint_dir.is_none() {
        log::warn!("partial sweep without --checkpoint-dir: progress will not be kept");
    }
    if let Some(dir) = &args.checkpoint_dir {
        create_dir(dir)?;
    }

    let mut manifest = RunManifest::start("rank");
    manifest.config_path = Some(args.dataset.clone());
    manifest.dataset_fingerprint = Some(dataset.scaled.fingerprint_hex());

    let config = SweepConfig {
        lengths: args.lengths,
        workers: args.workers,
        checkpoint_dir: args.checkpoint_dir.clone(),
        stride: args.stride,
        budget: args.budget,
        ..SweepConfig::default()
    };
    let progress = sweep_lengths(&dataset.scaled, &config)?;
    let result = if progress.complete {
        match finalize(
            &dataset.scaled,
            &dataset.aliases,
            progress.accumulators,
            args.checkpoint_dir.as_deref(),
        ) {
            Ok(r) => Some(r),
            Err(Error::IncompleteSweep { missing }) => {
                println!(
                    "requested lengths done; lengths {missing:?} still to run before scores can be written"
                );
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        println!("budget reached; rerun with the same --checkpoint-dir to continue");
        None
    };

    create_dir(&args.out)?;
    if let Some(result) = result {
        if result.degenerate_metric {
            log::warn!("every site has the same summed ratio; metric set to zero");
        }
        let meta: HashMap<String, SiteMeta> = dataset
            .all_records()
            .map(|r| (r.registry_id.clone(), SiteMeta::from(r)))
            .collect();
        let path = manifest.output(args.out.join(SCORES_FILE));
        write_scores_csv(&result, &meta, BufWriter::new(File::create(&path)?))?;
        let path = manifest.output(args.out.join("contributions.csv"));
        result.write_csv(&meta, BufWriter::new(File::create(&path)?))?;
        let all: Vec<usize> = (0..result.kept_ids.len()).collect();
        let path = manifest.output(args.out.join("nr_by_length.csv"));
        result.write_nr_series(&all, BufWriter::new(File::create(&path)?))?;
        let path = manifest.output(args.out.join("variance.csv"));
        result.write_variance(BufWriter::new(File::create(&path)?))?;
        let path = manifest.output(args.out.join(RESULT_FILE));
        std::fs::write(&path, result.to_json()?)?;
        println!(
            "ranked {} sites into {}",
            result.sites.len(),
            args.out.display()
        );
    }
    manifest.finish(&args.out)
}
