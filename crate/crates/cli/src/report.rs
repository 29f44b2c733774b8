use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Subcommand;
use siting_core::checkpoint::timing_report;
use siting_core::ranking::{read_scores_csv, RankResult};
use siting_core::report::{format_top, top_rows};

use crate::rank::{RESULT_FILE, SCORES_FILE};
use crate::{require_file, usage};

#[derive(clap::Args)]
pub struct Args {
    #[command(subcommand)]
    report: Report,
}

#[derive(Subcommand)]
enum Report {
    /// Best sites by metric as a fixed-width table.
    Top {
        /// Scores CSV (or the run directory containing it).
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 20)]
        n: usize,
    },
    /// Observation ratio against subset length for the top sites (CSV).
    Curves {
        /// Ranking result (or the run directory containing it).
        #[arg(long)]
        result: PathBuf,
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Variance of the observation ratio per subset length (CSV).
    Variance {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time spent per subset length (CSV).
    Timings {
        #[arg(long, env = "SITING_CHECKPOINT_DIR")]
        checkpoint_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn in_dir(path: &Path, file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(file)
    } else {
        path.to_path_buf()
    }
}

fn load_result(path: &Path) -> anyhow::Result<RankResult> {
    let file = in_dir(path, RESULT_FILE);
    require_file(&file, "ranking result")?;
    RankResult::from_json(&std::fs::read_to_string(&file)?)
        .with_context(|| format!("reading {}", file.display()))
}

fn sink(out: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout()),
    })
}

pub fn run(args: Args) -> anyhow::Result<()> {
    match args.report {
        Report::Top { scores, n } => {
            if n == 0 {
                return Err(usage("--n must be at least 1"));
            }
            let file = in_dir(&scores, SCORES_FILE);
            require_file(&file, "scores file")?;
            let rows = read_scores_csv(File::open(&file)?)
                .with_context(|| format!("reading {}", file.display()))?;
            print!("{}", format_top(&top_rows(&rows, n)));
        }
        Report::Curves { result, n, out } => {
            let result = load_result(&result)?;
            let top = result.top_kept(n);
            result.write_nr_series(&top, sink(&out)?)?;
        }
        Report::Variance { result, out } => {
            load_result(&result)?.write_variance(sink(&out)?)?;
        }
        Report::Timings {
            checkpoint_dir,
            out,
        } => {
            if !checkpoint_dir.is_dir() {
                return Err(usage(format!(
                    "{} is not a directory",
                    checkpoint_dir.display()
                )));
            }
            let rows = timing_report(&checkpoint_dir)?;
            let mut w = sink(&out)?;
            writeln!(w, "s,elapsed_seconds,combinations")?;
            for r in rows {
                writeln!(w, "{},{},{}", r.s, r.elapsed_seconds, r.combinations)?;
            }
        }
    }
    Ok(())
}
