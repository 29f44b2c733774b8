use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;
use siting_core::predictor::{load_model, LookupTable};

use crate::require_file;
use crate::train::{LOOKUP_FILE, MODEL_FILE};

#[derive(clap::Args)]
pub struct Args {
    /// Directory written by `train`.
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    lon: f64,
    #[arg(long, allow_hyphen_values = true)]
    lat: f64,
    #[arg(long)]
    county_fips: u32,
    #[arg(long)]
    state_fips: u32,
}

#[derive(Serialize)]
struct Output {
    objectives: BTreeMap<String, f64>,
    metric: f64,
    importances: BTreeMap<String, f64>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let model_path = args.model_dir.join(MODEL_FILE);
    require_file(&model_path, "model")?;
    let model =
        load_model(&model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let lookup_path = args.model_dir.join(LOOKUP_FILE);
    let lookup = if lookup_path.is_file() {
        Some(LookupTable::from_json(&std::fs::read_to_string(
            &lookup_path,
        )?)?)
    } else {
        None
    };
    let x = [
        args.lon,
        args.lat,
        args.county_fips as f64,
        args.state_fips as f64,
    ];
    let p = model.predict(&x, lookup.as_ref())?;
    let names = &model.objective_names;
    let out = Output {
        objectives: names.iter().cloned().zip(p.objectives).collect(),
        metric: p.metric,
        importances: names.iter().cloned().zip(p.importances).collect(),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
