use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regression metrics. `r2` is `None` when the targets have no variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: Option<f64>,
}

impl EvalMetrics {
    /// Element-wise mean of several metric sets (R² over the defined ones).
    pub fn mean(all: &[EvalMetrics]) -> Option<EvalMetrics> {
        if all.is_empty() {
            return None;
        }
        let k = all.len() as f64;
        let r2s: Vec<f64> = all.iter().filter_map(|m| m.r2).collect();
        Some(EvalMetrics {
            mse: all.iter().map(|m| m.mse).sum::<f64>() / k,
            rmse: all.iter().map(|m| m.rmse).sum::<f64>() / k,
            mae: all.iter().map(|m| m.mae).sum::<f64>() / k,
            r2: (!r2s.is_empty()).then(|| r2s.iter().sum::<f64>() / r2s.len() as f64),
        })
    }
}

fn check(y_true: &[f64], y_pred: &[f64]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidArgument(format!(
            "{} targets but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    Ok(())
}

fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Option<f64> {
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
}

pub fn evaluate(y_true: &[f64], y_pred: &[f64]) -> Result<EvalMetrics> {
    check(y_true, y_pred)?;
    let n = y_true.len() as f64;
    let mse = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).powi(2))
        .sum::<f64>()
        / n;
    let mae = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (y - p).abs())
        .sum::<f64>()
        / n;
    Ok(EvalMetrics {
        mse,
        rmse: mse.sqrt(),
        mae,
        r2: r_squared(y_true, y_pred),
    })
}

/// Multi-output metrics over row-major `rows x cols` matrices: MSE and MAE
/// pooled over every entry, R² averaged over the columns where it is
/// defined.
pub fn evaluate_columns(y_true: &[f64], y_pred: &[f64], cols: usize) -> Result<EvalMetrics> {
    if cols == 0 || !y_true.len().is_multiple_of(cols) {
        return Err(Error::InvalidArgument(format!(
            "{} values do not form rows of {cols}",
            y_true.len()
        )));
    }
    check(y_true, y_pred)?;
    let rows = y_true.len() / cols;
    if rows < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let pooled = evaluate(y_true, y_pred)?;
    let r2s: Vec<f64> = (0..cols)
        .filter_map(|j| {
            let t: Vec<f64> = (0..rows).map(|i| y_true[i * cols + j]).collect();
            let p: Vec<f64> = (0..rows).map(|i| y_pred[i * cols + j]).collect();
            r_squared(&t, &p)
        })
        .collect();
    Ok(EvalMetrics {
        r2: (!r2s.is_empty()).then(|| r2s.iter().sum::<f64>() / r2s.len() as f64),
        ..pooled
    })
}
