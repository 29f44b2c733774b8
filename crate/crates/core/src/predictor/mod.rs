//! Predicting objectives, siting metric and objective importances from a
//! site's location.

mod io;
mod lookup;
mod metrics;
mod model;
mod network;
mod train;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use io::{decode_model, encode_model, load_model, save_model};
pub use lookup::{
    build_lookup, build_lookup_with, cross_validate, nearest_brute, predict_objectives,
    CrossValidation, DistanceMetric, LookupConfig, LookupTable,
};
pub use metrics::{evaluate, evaluate_columns, EvalMetrics};
pub use model::{
    Architecture, ConcModel, LossParts, LossWeights, Prediction, PredictorMode, Standardizer,
    TrainSample, INPUTS,
};
pub use network::{sigmoid, softmax, Activation, Dense, Mlp, Trace};
pub use train::{
    fit_regression, gradient_check, gradient_check_with, split_indices, train, Adam, EpochRecord,
    GradientCheck, SplitMetrics, TrainConfig, TrainReport,
};

use crate::dataset::SiteRecord;
use crate::error::{Error, Result};
use crate::ranking::RankResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSample {
    /// `[lon, lat, county_fips, state_fips]`.
    pub x: [f64; 4],
    /// Raw objectives in objective order.
    pub y1: Vec<f64>,
    /// Siting metric followed by one importance per objective.
    pub y2: Vec<f64>,
}

/// Joins site records with their ranking scores. Every scored site must
/// have a record.
pub fn samples_from<'a>(
    records: impl IntoIterator<Item = &'a SiteRecord>,
    result: &RankResult,
) -> Result<Vec<PredictorSample>> {
    let by_id: HashMap<&str, &SiteRecord> = records
        .into_iter()
        .map(|r| (r.registry_id.as_str(), r))
        .collect();
    result
        .sites
        .iter()
        .map(|site| {
            let r = by_id.get(site.site_id.as_str()).ok_or_else(|| {
                Error::InvalidArgument(format!("no record for scored site {}", site.site_id))
            })?;
            let mut y2 = vec![site.metric];
            y2.extend(&site.sc);
            Ok(PredictorSample {
                x: r.inputs(),
                y1: r.raw_objectives.clone(),
                y2,
            })
        })
        .collect()
}
