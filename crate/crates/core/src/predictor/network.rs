//! Dense feed-forward layers with manual backpropagation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Linear,
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Tanh,
        Activation::Sigmoid,
    ];

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    0.01 * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Has a point where the derivative jumps (at `z = 0`).
    pub fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu)
    }

    /// Derivative given the pre-activation `z` and output `a`.
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => (z > 0.0) as u8 as f64,
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.01
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::InvalidArgument(format!(
                "unknown activation {other:?}"
            ))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// He-scaled normal weights for rectifiers, Glorot-scaled otherwise;
    /// zero bias.
    pub fn random<R: Rng>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let std = match activation {
            Activation::Relu | Activation::LeakyRelu => (2.0 / inputs as f64).sqrt(),
            _ => (2.0 / (inputs + outputs) as f64).sqrt(),
        };
        let mut layer = Dense::zeros(inputs, outputs, activation);
        for w in &mut layer.weights {
            *w = std * rng.sample::<f64, _>(StandardNormal);
        }
        layer
    }

    fn pre_activation(&self, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        z.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

/// Per-layer values recorded by a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// `activations[0]` is the input; `activations[l + 1]` is layer l's output.
    pub activations: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Layers of sizes `dims[0] -> dims[1] -> ...`, `hidden` activation on
    /// all but the last layer, which uses `output`.
    pub fn new<R: Rng>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer dims {dims:?}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| Dense::random(w[0], w[1], if l == last { output } else { hidden }, rng))
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs a layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.weights.len() != layer.inputs * layer.outputs
                || layer.bias.len() != layer.outputs
            {
                return Err(Error::InvalidArgument(format!(
                    "layer {l} has inconsistent shapes"
                )));
            }
            if l > 0 && layers[l - 1].outputs != layer.inputs {
                return Err(Error::InvalidArgument(format!(
                    "layer {l} expects {} inputs but receives {}",
                    layer.inputs,
                    layers[l - 1].outputs
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").outputs
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Evaluates the network, failing on the first layer whose output is
    /// not finite.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut a = x.to_vec();
        let mut z = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.pre_activation(&a, &mut z);
            a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: l });
            }
        }
        Ok(a)
    }

    /// Forward pass keeping every intermediate for [`Mlp::backward`].
    pub fn forward_trace(&self, x: &[f64], trace: &mut Trace) {
        trace.activations.resize(self.layers.len() + 1, Vec::new());
        trace.pre.resize(self.layers.len(), Vec::new());
        trace.activations[0].clear();
        trace.activations[0].extend_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = trace.activations.split_at_mut(l + 1);
            layer.pre_activation(&before[l], &mut trace.pre[l]);
            after[0].clear();
            after[0].extend(trace.pre[l].iter().map(|&v| layer.activation.apply(v)));
        }
    }

    /// Adds the parameter gradients for output gradient `d_out` into
    /// `grads` and returns the gradient with respect to the input.
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grads: &mut [Vec<f64>]) -> Vec<f64> {
        let mut delta: Vec<f64> = d_out.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre[l];
            let a = &trace.activations[l + 1];
            for o in 0..layer.outputs {
                delta[o] *= layer.activation.derivative(z[o], a[o]);
            }
            let input = &trace.activations[l];
            let (gw, gb) = {
                let (w, b) = grads[2 * l..2 * l + 2].split_at_mut(1);
                (&mut w[0], &mut b[0])
            };
            let mut d_in = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let d = delta[o];
                gb[o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = o * layer.inputs;
                for i in 0..layer.inputs {
                    gw[row + i] += d * input[i];
                    d_in[i] += d * layer.weights[row + i];
                }
            }
            delta = d_in;
        }
        delta
    }

    /// Zeroed gradient blocks, weights then bias for each layer.
    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .flat_map(|l| [vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]])
            .collect()
    }

    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_activated_bias() {
        let mut a = Dense::zeros(3, 2, Activation::Sigmoid);
        a.bias = vec![0.0, 2.0];
        let mut b = Dense::zeros(2, 2, Activation::Relu);
        b.bias = vec![-1.0, 0.5];
        let net = Mlp::from_layers(vec![a, b]).unwrap();
        assert_eq!(net.forward(&[5.0, -3.0, 1.0]).unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut l = Dense::zeros(3, 3, Activation::Linear);
        for i in 0..3 {
            l.weights[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_layers(vec![l]).unwrap();
        assert_eq!(
            net.forward(&[1.5, -2.0, 0.25]).unwrap(),
            vec![1.5, -2.0, 0.25]
        );
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Dense::zeros(3, 2, Activation::Relu);
        let b = Dense::zeros(3, 1, Activation::Linear);
        assert!(Mlp::from_layers(vec![a, b]).is_err());
    }

    #[test]
    fn overflow_reports_layer() {
        let mut a = Dense::zeros(1, 1, Activation::Linear);
        a.weights[0] = 1e300;
        let mut b = Dense::zeros(1, 1, Activation::Linear);
        b.weights[0] = 1e300;
        let net = Mlp::from_layers(vec![a, b]).unwrap();
        assert!(matches!(
            net.forward(&[10.0]),
            Err(Error::NonFiniteActivation { layer: 1 })
        ));
    }

    #[test]
    fn trace_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(
            &[4, 8, 8, 3],
            Activation::Tanh,
            Activation::Linear,
            &mut rng,
        )
        .unwrap();
        let x = [0.3, -1.0, 2.0, 0.0];
        let mut t = Trace::default();
        net.forward_trace(&x, &mut t);
        assert_eq!(t.output(), net.forward(&x).unwrap().as_slice());
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 999.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
