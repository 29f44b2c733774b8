use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;
use siting_core::predictor::{
    build_lookup, samples_from, save_model, train, Activation, Architecture, PredictorMode,
    SplitMetrics, TrainConfig,
};
use siting_core::ranking::RankResult;

use crate::ingest::load_dataset;
use crate::manifest::RunManifest;
use crate::rank::RESULT_FILE;
use crate::{create_dir, require_file, usage};

pub const MODEL_FILE: &str = "model.bin";
pub const LOOKUP_FILE: &str = "lookup.json";

#[derive(clap::Args)]
pub struct Args {
    /// Dataset written by `ingest` (file or directory).
    #[arg(long)]
    dataset: PathBuf,
    /// Ranking result written by `rank` (file or directory).
    #[arg(long)]
    ranking: Option<PathBuf>,
    /// Output directory for the model.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `conc` trains both stages jointly; `lut` uses the lookup table for
    /// the first stage.
    #[arg(long, default_value = "conc")]
    mode: PredictorMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training settings (TOML or JSON); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Print the architecture search grid as JSON lines and exit.
    #[arg(long)]
    grid: bool,
}

#[derive(Serialize)]
struct Metrics<'a> {
    mode: PredictorMode,
    best_epoch: usize,
    stopped_early: bool,
    train_sites: usize,
    test_sites: usize,
    y1: Option<&'a SplitMetrics>,
    y2: &'a SplitMetrics,
}

/// Candidate architectures around the full-size defaults.
fn search_grid() -> Vec<TrainConfig> {
    let mut out = Vec::new();
    for depth1 in [5, 7, 9] {
        for width1 in [400, 600, 800] {
            for depth2 in [3, 5] {
                for width2 in [650, 950] {
                    for lr in [1e-3, 2e-4] {
                        out.push(TrainConfig {
                            architecture: Architecture {
                                stage1_hidden: vec![width1; depth1],
                                stage2_hidden: vec![width2; depth2],
                                activation: Activation::Relu,
                            },
                            learning_rate: lr,
                            ..TrainConfig::conc_full()
                        });
                    }
                }
            }
        }
    }
    out
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if args.grid {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        for cfg in search_grid() {
            writeln!(lock, "{}", serde_json::to_string(&cfg)?)?;
        }
        return Ok(());
    }
    let ranking = args
        .ranking
        .as_ref()
        .ok_or_else(|| usage("--ranking is required unless --grid is given"))?;
    let out = args
        .out
        .as_ref()
        .ok_or_else(|| usage("--out is required unless --grid is given"))?;

    let mut config = match &args.config {
        Some(path) => {
            require_file(path, "training config")?;
            TrainConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => TrainConfig::default(),
    };
    config.mode = args.mode;
    config.seed = args.seed;
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if config.mode == PredictorMode::Lut {
        config.architecture.stage1_hidden.clear();
    }

    let dataset = load_dataset(&args.dataset)?;
    let result_path = if ranking.is_dir() {
        ranking.join(RESULT_FILE)
    } else {
        ranking.clone()
    };
    require_file(&result_path, "ranking result")?;
    let result = RankResult::from_json(&std::fs::read_to_string(&result_path)?)
        .with_context(|| format!("reading {}", result_path.display()))?;
    if result.dataset_fingerprint != dataset.scaled.fingerprint_hex() {
        return Err(usage(
            "ranking result was produced from a different dataset",
        ));
    }

    let records: Vec<_> = dataset.all_records().cloned().collect();
    let samples = samples_from(&records, &result)?;
    let lookup = build_lookup(&records, &dataset.spec)?;
    let report = train(&samples, &dataset.spec, &config, Some(&lookup))?;

    create_dir(out)?;
    let mut manifest = RunManifest::start("train");
    manifest.config_path = args.config.clone();
    manifest.dataset_fingerprint = Some(result.dataset_fingerprint.clone());
    manifest.seed = Some(config.seed);

    save_model(&report.model, &manifest.output(out.join(MODEL_FILE)))?;
    std::fs::write(manifest.output(out.join(LOOKUP_FILE)), lookup.to_json()?)?;
    std::fs::write(
        manifest.output(out.join("config.json")),
        serde_json::to_string_pretty(&config)?,
    )?;

    let path = manifest.output(out.join("curves.csv"));
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(
        w,
        "epoch,learning_rate,train_total,train_y_l,train_y_b,train_y2,validation_total"
    )?;
    for r in &report.curves {
        let val = r
            .validation
            .map(|v| v.total.to_string())
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.epoch, r.learning_rate, r.train.total, r.train.y_l, r.train.y_b, r.train.y2, val
        )?;
    }
    w.flush()?;

    let metrics = Metrics {
        mode: config.mode,
        best_epoch: report.best_epoch,
        stopped_early: report.stopped_early,
        train_sites: report.train_indices.len(),
        test_sites: report.test_indices.len(),
        y1: report.y1.as_ref(),
        y2: &report.y2,
    };
    let json = serde_json::to_string_pretty(&metrics)?;
    std::fs::write(manifest.output(out.join("metrics.json")), &json)?;
    println!("{json}");
    manifest.finish(out)
}
