//! Mini-batch Adam training, learning-rate decay, early stopping and
//! finite-difference gradient checking.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lookup::LookupTable;
use super::metrics::{evaluate_columns, EvalMetrics};
use super::model::{Architecture, ConcModel, LossParts, LossWeights, PredictorMode, TrainSample};
use super::network::{Activation, Mlp, Trace};
use super::PredictorSample;
use crate::dataset::ObjectiveSpec;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: PredictorMode,
    pub architecture: Architecture,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate every `decay_epochs` epochs.
    pub decay_factor: f64,
    pub decay_epochs: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
    pub test_fraction: f64,
    /// Share of the training portion held back for early stopping.
    pub validation_fraction: f64,
    pub loss_weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Small networks that train in seconds.
    fn default() -> Self {
        TrainConfig {
            mode: PredictorMode::Conc,
            architecture: Architecture::default(),
            learning_rate: 1e-3,
            decay_factor: 1.0,
            decay_epochs: 1,
            batch_size: 32,
            epochs: 300,
            patience: Some(25),
            test_fraction: 0.2,
            validation_fraction: 0.1,
            loss_weights: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Full-size joint network: seven hidden layers of 600 then five of 950.
    pub fn conc_full() -> Self {
        TrainConfig {
            architecture: Architecture {
                stage1_hidden: vec![600; 7],
                stage2_hidden: vec![950; 5],
                activation: Activation::Relu,
            },
            batch_size: 256,
            epochs: 2000,
            ..TrainConfig::default()
        }
    }

    /// Full-size lookup-mode head: five hidden layers of 950.
    pub fn lut_full() -> Self {
        TrainConfig {
            mode: PredictorMode::Lut,
            architecture: Architecture {
                stage1_hidden: Vec::new(),
                stage2_hidden: vec![950; 5],
                activation: Activation::Relu,
            },
            learning_rate: 2e-4,
            decay_factor: 0.92,
            decay_epochs: 1,
            batch_size: 16,
            epochs: 1000,
            patience: Some(25),
            ..TrainConfig::default()
        }
    }

    /// Reads a JSON (`.json`) or TOML file; missing keys keep their defaults.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) || self.decay_epochs == 0 {
            return bad("decay factor must be in (0, 1] with a positive period");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.test_fraction)
            || !(0.0..1.0).contains(&self.validation_fraction)
        {
            return bad("split fractions must be in [0, 1)");
        }
        Ok(())
    }

    /// Learning rate in effect during 1-based `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let steps = (epoch.saturating_sub(1) / self.decay_epochs) as i32;
        self.learning_rate * self.decay_factor.powi(steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train: LossParts,
    pub validation: Option<LossParts>,
}

/// Seeded shuffle split into `(train, test)` index sets, both sorted.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test_n = (n as f64 * test_fraction).round() as usize;
    if test_fraction > 0.0 && n >= 2 {
        test_n = test_n.clamp(1, n - 1);
    }
    let mut test = idx.split_off(n - test_n);
    idx.sort_unstable();
    test.sort_unstable();
    (idx, test)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: EvalMetrics,
    pub test: Option<EvalMetrics>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: ConcModel,
    pub curves: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Objectives in raw units; joint mode only.
    pub y1: Option<SplitMetrics>,
    pub y2: SplitMetrics,
}

/// Trains a predictor on `samples`. Lookup mode feeds stage 2 with true
/// objectives during training; evaluation goes through `lookup` when one
/// is given.
pub fn train(
    samples: &[PredictorSample],
    spec: &ObjectiveSpec,
    config: &TrainConfig,
    lookup: Option<&LookupTable>,
) -> Result<TrainReport> {
    config.validate()?;
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let m = spec.len();
    for (i, s) in samples.iter().enumerate() {
        if s.y1.len() != m || s.y2.len() != m + 1 {
            return Err(Error::InvalidArgument(format!(
                "sample {i} has {} objectives and {} scores, expected {m} and {}",
                s.y1.len(),
                s.y2.len(),
                m + 1
            )));
        }
    }

    let (train_idx, test_idx) = split_indices(samples.len(), config.test_fraction, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut fit_idx = train_idx.clone();
    fit_idx.shuffle(&mut rng);
    let val_n = (fit_idx.len() as f64 * config.validation_fraction).round() as usize;
    let val_n = val_n.min(fit_idx.len().saturating_sub(1));
    let val_idx: Vec<usize> = fit_idx.split_off(fit_idx.len() - val_n);
    fit_idx.sort_unstable();

    let mut model = ConcModel::new(
        spec,
        config.mode,
        &config.architecture,
        config.loss_weights,
        config.seed,
    )?;
    let fit_refs: Vec<&PredictorSample> = fit_idx.iter().map(|&i| &samples[i]).collect();
    model.fit_scalers(&fit_refs);
    let data: Vec<TrainSample> = samples.iter().map(|s| model.prepare(s)).collect();

    let mut adam = Adam::new(config.learning_rate);
    let mut curves = Vec::new();
    let mut best: Option<(f64, ConcModel, usize)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut order = fit_idx.clone();

    for epoch in 1..=config.epochs {
        adam.learning_rate = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut sums = LossParts::default();
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = model.loss_and_grad(&data, batch);
            if !loss.total.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let k = batch.len() as f64;
            sums.y_l += loss.y_l * k;
            sums.y_b += loss.y_b * k;
            sums.y2 += loss.y2 * k;
            sums.total += loss.total * k;
            adam.step(model.parameters_mut(), &grads);
        }
        let k = order.len() as f64;
        let train_loss = LossParts {
            y_l: sums.y_l / k,
            y_b: sums.y_b / k,
            y2: sums.y2 / k,
            total: sums.total / k,
        };
        let validation = (!val_idx.is_empty()).then(|| model.loss(&data, Some(&val_idx)));
        if validation.is_some_and(|v| !v.total.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        curves.push(EpochRecord {
            epoch,
            learning_rate: adam.learning_rate,
            train: train_loss,
            validation,
        });

        let monitored = validation.unwrap_or(train_loss).total;
        if best.as_ref().is_none_or(|(b, _, _)| monitored < *b) {
            best = Some((monitored, model.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience.is_some_and(|p| since_best >= p) {
                stopped_early = true;
                break;
            }
        }
    }
    let (_, model, best_epoch) = best.expect("at least one epoch");

    let y2 = SplitMetrics {
        train: evaluate_y2(&model, samples, &data, &train_idx, lookup)?
            .expect("training split is nonempty"),
        test: evaluate_y2(&model, samples, &data, &test_idx, lookup)?,
    };
    let y1 = match model.mode {
        PredictorMode::Conc => Some(SplitMetrics {
            train: evaluate_y1(&model, samples, &data, &train_idx)?
                .expect("training split is nonempty"),
            test: evaluate_y1(&model, samples, &data, &test_idx)?,
        }),
        PredictorMode::Lut => None,
    };
    Ok(TrainReport {
        model,
        curves,
        best_epoch,
        stopped_early,
        train_indices: train_idx,
        test_indices: test_idx,
        y1,
        y2,
    })
}

fn evaluate_y2(
    model: &ConcModel,
    samples: &[PredictorSample],
    data: &[TrainSample],
    idx: &[usize],
    lookup: Option<&LookupTable>,
) -> Result<Option<EvalMetrics>> {
    if idx.len() < 2 {
        return Ok(None);
    }
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for &i in idx {
        truth.extend_from_slice(&samples[i].y2);
        match (model.mode, lookup) {
            (PredictorMode::Lut, Some(lut)) => {
                let p = model.predict(&samples[i].x, Some(lut))?;
                pred.push(p.metric);
                pred.extend(p.importances);
            }
            _ => pred.extend(model.stage2_output(&data[i])),
        }
    }
    evaluate_columns(&truth, &pred, model.m() + 1).map(Some)
}

fn evaluate_y1(
    model: &ConcModel,
    samples: &[PredictorSample],
    data: &[TrainSample],
    idx: &[usize],
) -> Result<Option<EvalMetrics>> {
    if idx.len() < 2 {
        return Ok(None);
    }
    let mut truth = Vec::new();
    let mut pred = Vec::new();
    for &i in idx {
        truth.extend_from_slice(&samples[i].y1);
        let t = model
            .stage1_output(&data[i])
            .expect("joint model has a first stage");
        pred.extend(model.y1_to_raw(&t));
    }
    evaluate_columns(&truth, &pred, model.m()).map(Some)
}

/// Result of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    /// Parameters compared.
    pub parameters: usize,
    /// Parameters whose perturbation moved a rectifier across its kink;
    /// the difference quotient is meaningless there, so they are left out.
    pub skipped: usize,
}

/// Relative errors below this magnitude of gradient are measured
/// against the floor instead.
const GRADIENT_FLOOR: f64 = 1e-7;

/// Compares the model's backpropagated gradient of the total loss on
/// `data` against centred finite differences.
pub fn gradient_check(
    model: &ConcModel,
    data: &[TrainSample],
    epsilon: f64,
) -> Result<GradientCheck> {
    gradient_check_with(model, data, epsilon, |m, d| {
        let idx: Vec<usize> = (0..d.len()).collect();
        m.loss_and_grad(d, &idx).1
    })
}

/// As [`gradient_check`] with a caller-supplied analytic gradient.
#[allow(clippy::needless_range_loop)]
pub fn gradient_check_with(
    model: &ConcModel,
    data: &[TrainSample],
    epsilon: f64,
    analytic: impl FnOnce(&ConcModel, &[TrainSample]) -> Vec<Vec<f64>>,
) -> Result<GradientCheck> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let grads = analytic(model, data);
    let base = model.kink_pattern(data);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut skipped = 0;
    let blocks = grads.len();
    for b in 0..blocks {
        for i in 0..grads[b].len() {
            let orig = probe.parameters()[b][i];
            let mut crossed = false;
            // centred differences at h and h/2, combined by Richardson
            // extrapolation so truncation error is O(h^4)
            let mut diff = |h: f64| {
                probe.parameters_mut()[b][i] = orig + h;
                let up = probe.loss(data, None).total;
                crossed |= probe.kink_pattern(data) != base;
                probe.parameters_mut()[b][i] = orig - h;
                let down = probe.loss(data, None).total;
                crossed |= probe.kink_pattern(data) != base;
                (up - down) / (2.0 * h)
            };
            let (wide, narrow) = (diff(epsilon), diff(epsilon / 2.0));
            probe.parameters_mut()[b][i] = orig;
            if crossed {
                skipped += 1;
                continue;
            }
            let numeric = (4.0 * narrow - wide) / 3.0;
            let a = grads[b][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            worst = worst.max(rel);
            count += 1;
        }
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        parameters: count,
        skipped,
    })
}

/// Plain squared-error regression of an [`Mlp`], full batch with Adam.
/// Returns the training MSE after each epoch.
pub fn fit_regression(
    net: &mut Mlp,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    learning_rate: f64,
    epochs: usize,
) -> Result<Vec<f64>> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "inputs and targets must pair up".into(),
        ));
    }
    let out_dim = net.output_dim();
    let scale = 2.0 / (inputs.len() * out_dim) as f64;
    let mut adam = Adam::new(learning_rate);
    let mut trace = Trace::default();
    let mut curve = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let mut grads = net.zero_grads();
        let mut sse = 0.0;
        for (x, y) in inputs.iter().zip(targets) {
            net.forward_trace(x, &mut trace);
            let d: Vec<f64> = trace.output().iter().zip(y).map(|(p, t)| p - t).collect();
            sse += d.iter().map(|v| v * v).sum::<f64>();
            let d: Vec<f64> = d.into_iter().map(|v| v * scale).collect();
            net.backward(&trace, &d, &mut grads);
        }
        let mse = sse / (inputs.len() * out_dim) as f64;
        if !mse.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        adam.step(net.parameters_mut(), &grads);
        curve.push(mse);
    }
    Ok(curve)
}
