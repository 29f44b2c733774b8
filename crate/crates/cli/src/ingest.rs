use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::Context;
use siting_core::dataset::{parse_sites_with, IngestedDataset, ObjectiveSpec, ParseOptions};

use crate::manifest::RunManifest;
use crate::{create_dir, require_file, usage};

pub const DATASET_FILE: &str = "dataset.json";

#[derive(clap::Args)]
pub struct Args {
    /// Site table (CSV with the fixed columns plus one column per objective).
    #[arg(long)]
    csv: PathBuf,
    /// Objective definitions (TOML, or JSON by extension).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Coordinate truncation step in degrees for deduplication.
    #[arg(long, default_value_t = 0.01)]
    precision: f64,
    /// Reject sites outside the contiguous-US bounding box.
    #[arg(long)]
    validate_bounds: bool,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    require_file(&args.spec, "objective spec")?;
    require_file(&args.csv, "site table")?;
    if !(args.precision > 0.0 && args.precision.is_finite()) {
        return Err(usage("--precision must be a positive number"));
    }
    let mut manifest = RunManifest::start("ingest");
    manifest.config_path = Some(args.spec.clone());

    let spec = ObjectiveSpec::from_path(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let input = File::open(&args.csv).with_context(|| format!("opening {}", args.csv.display()))?;
    let table = parse_sites_with(
        input,
        &spec,
        ParseOptions {
            validate_bounds: args.validate_bounds,
        },
    )
    .with_context(|| format!("parsing {}", args.csv.display()))?;
    let dataset = IngestedDataset::build(&table, &spec, args.precision)?;
    for &j in &dataset.scaled.constant_columns {
        log::warn!(
            "objective {} is constant and was set to 0.5",
            spec.objectives[j].name
        );
    }
    log::info!(
        "{} sites read, {} kept, {} folded into a representative",
        table.len(),
        dataset.kept.len(),
        dataset.aliases.removed_count()
    );

    create_dir(&args.out)?;
    manifest.dataset_fingerprint = Some(dataset.scaled.fingerprint_hex());
    let path = manifest.output(args.out.join(DATASET_FILE));
    serde_json::to_writer(BufWriter::new(File::create(&path)?), &dataset)?;
    let path = manifest.output(args.out.join("aliases.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&dataset.aliases)?)?;

    let path = manifest.output(args.out.join("scaled.csv"));
    dataset
        .scaled
        .write_csv(BufWriter::new(File::create(&path)?))?;

    println!(
        "ingested {} sites ({} kept) into {}",
        table.len(),
        dataset.kept.len(),
        args.out.display()
    );
    manifest.finish(&args.out)
}

/// Reads a dataset written by `ingest`; accepts the file or its directory.
pub fn load_dataset(path: &std::path::Path) -> anyhow::Result<IngestedDataset> {
    let file = if path.is_dir() {
        path.join(DATASET_FILE)
    } else {
        path.to_path_buf()
    };
    require_file(&file, "dataset")?;
    let reader = std::io::BufReader::new(File::open(&file)?);
    serde_json::from_reader(reader).with_context(|| format!("reading {}", file.display()))
}
