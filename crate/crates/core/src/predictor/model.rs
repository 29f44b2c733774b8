//! Two-stage predictor: stage 1 maps location inputs to objectives, stage 2
//! maps inputs plus objectives to the siting metric and importances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lookup::LookupTable;
use super::network::{sigmoid, softmax, Activation, Mlp, Trace};
use super::PredictorSample;
use crate::dataset::{ObjectiveKind, ObjectiveSpec};
use crate::error::{Error, Result};

/// Number of location inputs: lon, lat, county_fips, state_fips.
pub const INPUTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorMode {
    /// Stage 1 is a network trained jointly with stage 2.
    Conc,
    /// Stage 1 is the lookup table; only stage 2 is trained.
    Lut,
}

impl std::str::FromStr for PredictorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conc" => Ok(PredictorMode::Conc),
            "lut" => Ok(PredictorMode::Lut),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

/// Per-feature affine standardization; constant features get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.is_empty() {
            return Standardizer::identity(dim);
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..dim)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let scale = (0..dim)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub y_l: f64,
    pub y_b: f64,
    pub y2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            y_l: 1.0,
            y_b: 1.0,
            y2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub stage1_hidden: Vec<usize>,
    pub stage2_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            stage1_hidden: vec![64, 64, 64],
            stage2_hidden: vec![64, 64],
            activation: Activation::Relu,
        }
    }
}

/// A sample in the units the networks see: standardized inputs, stage-1
/// targets as `[standardized continuous..., binary...]`, stage-2 targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub x: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

/// Batch-mean loss terms and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub y_l: f64,
    pub y_b: f64,
    pub y2: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Raw units, objective order.
    pub objectives: Vec<f64>,
    pub metric: f64,
    pub importances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcModel {
    pub mode: PredictorMode,
    pub seed: u64,
    pub objective_names: Vec<String>,
    /// Continuous objective columns, in stage-1 output order.
    pub yl_cols: Vec<usize>,
    /// Binary objective columns, following the continuous ones.
    pub yb_cols: Vec<usize>,
    pub x_scaler: Standardizer,
    pub yl_scaler: Standardizer,
    pub stage1: Option<Mlp>,
    pub stage2: Mlp,
    pub loss_weights: LossWeights,
}

fn bce_with_logit(z: f64, t: f64) -> f64 {
    z.max(0.0) - t * z + (-z.abs()).exp().ln_1p()
}

#[derive(Default)]
struct Workspace {
    t1: Trace,
    t2: Trace,
    input2: Vec<f64>,
}

impl ConcModel {
    /// Fresh randomly initialised model. Scalers come from the training
    /// data (see [`ConcModel::fit_scalers`]).
    pub fn new(
        spec: &ObjectiveSpec,
        mode: PredictorMode,
        arch: &Architecture,
        loss_weights: LossWeights,
        seed: u64,
    ) -> Result<Self> {
        let m = spec.len();
        let yl_cols = spec.columns_of_kind(ObjectiveKind::Continuous);
        let yb_cols = spec.columns_of_kind(ObjectiveKind::Binary);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stage1 = match mode {
            PredictorMode::Conc => {
                let mut dims = vec![INPUTS];
                dims.extend(&arch.stage1_hidden);
                dims.push(m);
                Some(Mlp::new(
                    &dims,
                    arch.activation,
                    Activation::Linear,
                    &mut rng,
                )?)
            }
            PredictorMode::Lut => None,
        };
        let mut dims = vec![INPUTS + m];
        dims.extend(&arch.stage2_hidden);
        dims.push(1 + m);
        let stage2 = Mlp::new(&dims, arch.activation, Activation::Linear, &mut rng)?;
        Ok(ConcModel {
            mode,
            seed,
            objective_names: spec.names().map(String::from).collect(),
            yl_scaler: Standardizer::identity(yl_cols.len()),
            yl_cols,
            yb_cols,
            x_scaler: Standardizer::identity(INPUTS),
            stage1,
            stage2,
            loss_weights,
        })
    }

    pub fn m(&self) -> usize {
        self.objective_names.len()
    }

    /// Fits input and continuous-objective standardization to `samples`.
    pub fn fit_scalers(&mut self, samples: &[&PredictorSample]) {
        self.x_scaler = Standardizer::fit(samples.iter().map(|s| &s.x[..]), INPUTS);
        let yl: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| self.yl_cols.iter().map(|&j| s.y1[j]).collect())
            .collect();
        self.yl_scaler = Standardizer::fit(yl.iter().map(Vec::as_slice), self.yl_cols.len());
    }

    /// Raw objectives to stage-1 target space.
    pub fn y1_to_training(&self, raw: &[f64]) -> Vec<f64> {
        let yl: Vec<f64> = self.yl_cols.iter().map(|&j| raw[j]).collect();
        let mut out = self.yl_scaler.apply(&yl);
        out.extend(self.yb_cols.iter().map(|&j| raw[j]));
        out
    }

    /// Stage-1 target space back to raw objectives; binaries rounded.
    pub fn y1_to_raw(&self, t: &[f64]) -> Vec<f64> {
        let nl = self.yl_cols.len();
        let yl = self.yl_scaler.invert(&t[..nl]);
        let mut out = vec![0.0; self.m()];
        for (&j, v) in self.yl_cols.iter().zip(yl) {
            out[j] = v;
        }
        for (&j, &p) in self.yb_cols.iter().zip(&t[nl..]) {
            out[j] = if p >= 0.5 { 1.0 } else { 0.0 };
        }
        out
    }

    pub fn prepare(&self, s: &PredictorSample) -> TrainSample {
        TrainSample {
            x: self.x_scaler.apply(&s.x),
            y1: self.y1_to_training(&s.y1),
            y2: s.y2.clone(),
        }
    }

    fn stage1_head(&self, out: &[f64]) -> Vec<f64> {
        let nl = self.yl_cols.len();
        out.iter()
            .enumerate()
            .map(|(i, &z)| if i < nl { z } else { sigmoid(z) })
            .collect()
    }

    fn stage2_head(out: &[f64]) -> (f64, Vec<f64>) {
        (out[0], softmax(&out[1..]))
    }

    /// Prediction for raw inputs `[lon, lat, county_fips, state_fips]`.
    /// The lookup table is required in lookup mode and ignored otherwise.
    pub fn predict(&self, x: &[f64; 4], lookup: Option<&LookupTable>) -> Result<Prediction> {
        let xs = self.x_scaler.apply(x);
        let (objectives, y1t) = match (&self.stage1, self.mode) {
            (Some(stage1), PredictorMode::Conc) => {
                let t = self.stage1_head(&stage1.forward(&xs)?);
                (self.y1_to_raw(&t), t)
            }
            _ => {
                let lut = lookup.ok_or_else(|| {
                    Error::InvalidArgument("lookup-mode model needs its lookup table".into())
                })?;
                let raw = lut.predict(x)?;
                let t = self.y1_to_training(&raw);
                (raw, t)
            }
        };
        let mut input = xs;
        input.extend(y1t);
        let out = self.stage2.forward(&input).map_err(|e| match e {
            Error::NonFiniteActivation { layer } => Error::NonFiniteActivation {
                layer: layer + self.stage1.as_ref().map_or(0, |s| s.layers.len()),
            },
            e => e,
        })?;
        let (metric, importances) = Self::stage2_head(&out);
        Ok(Prediction {
            objectives,
            metric,
            importances,
        })
    }

    /// Stage-1 predictions in target space, for evaluation.
    pub fn stage1_output(&self, s: &TrainSample) -> Option<Vec<f64>> {
        let stage1 = self.stage1.as_ref()?;
        let mut t = Trace::default();
        stage1.forward_trace(&s.x, &mut t);
        Some(self.stage1_head(t.output()))
    }

    /// Stage-2 prediction `[metric, importances...]` fed by stage 1 in
    /// joint mode and by the sample's own objectives in lookup mode.
    pub fn stage2_output(&self, s: &TrainSample) -> Vec<f64> {
        let mut ws = Workspace::default();
        self.forward_sample(s, &mut ws);
        let (metric, imp) = Self::stage2_head(ws.t2.output());
        let mut out = vec![metric];
        out.extend(imp);
        out
    }

    fn forward_sample(&self, s: &TrainSample, ws: &mut Workspace) {
        ws.input2.clear();
        ws.input2.extend_from_slice(&s.x);
        match &self.stage1 {
            Some(stage1) => {
                stage1.forward_trace(&s.x, &mut ws.t1);
                let head = self.stage1_head(ws.t1.output());
                ws.input2.extend(head);
            }
            None => ws.input2.extend_from_slice(&s.y1),
        }
        self.stage2.forward_trace(&ws.input2, &mut ws.t2);
    }

    fn sample_loss(&self, s: &TrainSample, ws: &Workspace) -> [f64; 3] {
        let mut parts = [0.0; 3];
        if self.stage1.is_some() {
            let nl = self.yl_cols.len();
            let nb = self.yb_cols.len();
            let out = ws.t1.output();
            if nl > 0 {
                parts[0] = (0..nl).map(|i| (out[i] - s.y1[i]).powi(2)).sum::<f64>() / nl as f64;
            }
            if nb > 0 {
                parts[1] = (nl..nl + nb)
                    .map(|i| bce_with_logit(out[i], s.y1[i]))
                    .sum::<f64>()
                    / nb as f64;
            }
        }
        let (metric, imp) = Self::stage2_head(ws.t2.output());
        let d2 = (1 + imp.len()) as f64;
        parts[2] = ((metric - s.y2[0]).powi(2)
            + imp
                .iter()
                .zip(&s.y2[1..])
                .map(|(p, t)| (p - t).powi(2))
                .sum::<f64>())
            / d2;
        parts
    }

    fn combine(&self, sums: [f64; 3], count: usize) -> LossParts {
        let k = count.max(1) as f64;
        let (y_l, y_b, y2) = (sums[0] / k, sums[1] / k, sums[2] / k);
        let w = self.loss_weights;
        LossParts {
            y_l,
            y_b,
            y2,
            total: w.y_l * y_l + w.y_b * y_b + w.y2 * y2,
        }
    }

    /// Mean loss over `data[idx]` (all of `data` when `idx` is `None`).
    pub fn loss(&self, data: &[TrainSample], idx: Option<&[usize]>) -> LossParts {
        let mut ws = Workspace::default();
        let mut sums = [0.0; 3];
        let mut count = 0;
        let mut add = |s: &TrainSample| {
            self.forward_sample(s, &mut ws);
            let p = self.sample_loss(s, &ws);
            for k in 0..3 {
                sums[k] += p[k];
            }
            count += 1;
        };
        match idx {
            Some(idx) => idx.iter().for_each(|&i| add(&data[i])),
            None => data.iter().for_each(add),
        }
        self.combine(sums, count)
    }

    /// Mean loss and its gradient over `data[idx]`, gradient blocks in
    /// [`ConcModel::parameters`] order.
    pub fn loss_and_grad(&self, data: &[TrainSample], idx: &[usize]) -> (LossParts, Vec<Vec<f64>>) {
        let mut g1 = self
            .stage1
            .as_ref()
            .map(|s| s.zero_grads())
            .unwrap_or_default();
        let mut g2 = self.stage2.zero_grads();
        let mut ws = Workspace::default();
        let mut sums = [0.0; 3];
        let b = idx.len().max(1) as f64;
        let w = self.loss_weights;
        let m = self.m();
        let nl = self.yl_cols.len();
        let nb = self.yb_cols.len();

        for &i in idx {
            let s = &data[i];
            self.forward_sample(s, &mut ws);
            let p = self.sample_loss(s, &ws);
            for k in 0..3 {
                sums[k] += p[k];
            }

            let out2 = ws.t2.output();
            let (metric, imp) = Self::stage2_head(out2);
            let c2 = w.y2 * 2.0 / ((1 + m) as f64 * b);
            let mut d2 = vec![0.0; 1 + m];
            d2[0] = c2 * (metric - s.y2[0]);
            let g: Vec<f64> = imp
                .iter()
                .zip(&s.y2[1..])
                .map(|(p, t)| c2 * (p - t))
                .collect();
            let pg: f64 = imp.iter().zip(&g).map(|(p, g)| p * g).sum();
            for k in 0..m {
                d2[1 + k] = imp[k] * (g[k] - pg);
            }
            let d_in = self.stage2.backward(&ws.t2, &d2, &mut g2);

            if let Some(stage1) = &self.stage1 {
                let out1 = ws.t1.output();
                let dy1 = &d_in[INPUTS..];
                let mut d1 = vec![0.0; m];
                for k in 0..nl {
                    d1[k] = w.y_l * 2.0 * (out1[k] - s.y1[k]) / (nl as f64 * b) + dy1[k];
                }
                for k in nl..nl + nb {
                    let p = sigmoid(out1[k]);
                    d1[k] = w.y_b * (p - s.y1[k]) / (nb as f64 * b) + dy1[k] * p * (1.0 - p);
                }
                stage1.backward(&ws.t1, &d1, &mut g1);
            }
        }
        g1.extend(g2);
        (self.combine(sums, idx.len()), g1)
    }

    /// Which side of its kink every rectifier unit sits on, over all of
    /// `data`. Two parameter settings with equal patterns lie in the same
    /// piece of the piecewise-smooth loss.
    pub fn kink_pattern(&self, data: &[TrainSample]) -> Vec<bool> {
        let mut ws = Workspace::default();
        let mut out = Vec::new();
        for s in data {
            self.forward_sample(s, &mut ws);
            let stages = self
                .stage1
                .iter()
                .map(|n| (n, &ws.t1))
                .chain([(&self.stage2, &ws.t2)]);
            for (net, trace) in stages {
                for (layer, pre) in net.layers.iter().zip(&trace.pre) {
                    if layer.activation.has_kink() {
                        out.extend(pre.iter().map(|&z| z > 0.0));
                    }
                }
            }
        }
        out
    }

    pub fn parameters(&self) -> Vec<&[f64]> {
        let mut p = self
            .stage1
            .as_ref()
            .map(|s| s.parameters())
            .unwrap_or_default();
        p.extend(self.stage2.parameters());
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self
            .stage1
            .as_mut()
            .map(|s| s.parameters_mut())
            .unwrap_or_default();
        p.extend(self.stage2.parameters_mut());
        p
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|b| b.len()).sum()
    }
}
