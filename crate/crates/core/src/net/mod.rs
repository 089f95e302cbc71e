//! Fully connected regression network.
//!
//! The standard topology is `[input, 10, 20, 15, 1]`: three Mish hidden
//! layers and a single linear output unit, trained on mean squared error with
//! Adam. Other layer lists are accepted so tests can use small networks.

mod activation;
mod format;
mod train;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use thiserror::Error;

pub use activation::{mish, mish_derivative};
pub use format::{from_text, load_model, save_model, to_text, FORMAT_VERSION};
pub use train::{adam_step, train, AdamState, EpochStats, TrainConfig, TrainingLog};

use crate::features::{FeatureVector, Normalizer};
use crate::history::StatusMatrix;
use crate::rocket::WeightKind;
use crate::NormalizerMode;

/// Hidden layer widths of the standard topology.
pub const HIDDEN_LAYERS: [usize; 3] = [10, 20, 15];

#[derive(Debug, Error)]
pub enum NetError {
    #[error("expected input of length {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("length mismatch: {left} predictions vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid layer dimensions {0:?}")]
    InvalidDims(Vec<usize>),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("label {0} outside [0, 1]")]
    LabelOutOfRange(f64),
    #[error("loss became non-finite at epoch {epoch} (last finite MSE {last_finite:?})")]
    NonFiniteLoss { epoch: usize, last_finite: Option<f64> },
    #[error("model file format {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: String, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Standard layer list for a given input width.
pub fn standard_dims(input_dim: usize) -> Vec<usize> {
    let mut dims = vec![input_dim];
    dims.extend(HIDDEN_LAYERS);
    dims.push(1);
    dims
}

/// One affine layer. `weights` is `inputs × outputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.outputs + j]
    }

    fn affine_into(&self, x: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.bias);
        for (xi, row) in x.iter().zip(self.weights.chunks_exact(self.outputs)) {
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Values recorded during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l + 1]` is layer `l`'s output.
    pub activations: Vec<Vec<f64>>,
    /// Pre-activation values per layer.
    pub pre_activations: Vec<Vec<f64>>,
}

/// Parameter-shaped buffers: gradients, Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).for_each(|v| v.fill(0.0));
    }

    /// Same order as [`Network::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b))
            .copied()
            .collect()
    }
}

fn validate_dims(dims: &[usize]) -> Result<(), NetError> {
    if dims.len() < 2 || dims.contains(&0) || dims.last() != Some(&1) {
        return Err(NetError::InvalidDims(dims.to_vec()));
    }
    Ok(())
}

impl Network {
    /// All weights and biases zero.
    pub fn zeros(dims: &[usize]) -> Result<Self, NetError> {
        validate_dims(dims)?;
        Ok(Self {
            layers: dims.windows(2).map(|p| Layer::zeros(p[0], p[1])).collect(),
        })
    }

    /// Xavier/Glorot uniform weights in `(-L, L)`, `L = √(6 / (fan_in + fan_out))`;
    /// zero biases.
    pub fn xavier<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self, NetError> {
        let mut net = Self::zeros(dims)?;
        for layer in &mut net.layers {
            let limit = xavier_limit(layer.inputs, layer.outputs);
            let dist = Uniform::new(-limit, limit).expect("positive xavier limit");
            layer.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
        }
        Ok(net)
    }

    pub(crate) fn from_layers(layers: Vec<Layer>) -> Result<Self, NetError> {
        let mut dims: Vec<usize> = layers.iter().map(|l| l.inputs).collect();
        dims.push(layers.last().map_or(0, |l| l.outputs));
        validate_dims(&dims)?;
        if layers.windows(2).any(|p| p[0].outputs != p[1].inputs)
            || layers
                .iter()
                .any(|l| l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs)
        {
            return Err(NetError::InvalidDims(dims));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        dims.push(1);
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flattened parameters: per layer, weights row-major then biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .copied()
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut it = params.iter();
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *p = *it.next().unwrap();
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|p| p.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetError> {
        if x.len() != self.input_dim() {
            return Err(NetError::DimMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(f64, ForwardCache), NetError> {
        self.check_input(x)?;
        let mut cache = ForwardCache {
            activations: vec![x.to_vec()],
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.outputs];
            layer.affine_into(&cache.activations[l], &mut z);
            let a = if l == last { z.clone() } else { z.iter().map(|&v| mish(v)).collect() };
            cache.pre_activations.push(z);
            cache.activations.push(a);
        }
        Ok((cache.activations[last + 1][0], cache))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, NetError> {
        self.check_input(x)?;
        let mut scratch = Scratch::new(self);
        Ok(self.infer_scratch(x, &mut scratch))
    }

    /// Predictions for many inputs, reusing one set of buffers.
    pub fn predict_batch<'a>(&self, xs: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>, NetError> {
        let mut scratch = Scratch::new(self);
        xs.into_iter()
            .map(|x| {
                self.check_input(x)?;
                Ok(self.infer_scratch(x, &mut scratch))
            })
            .collect()
    }

    /// Forward pass without the activation derivatives backprop needs.
    fn infer_scratch(&self, x: &[f64], s: &mut Scratch) -> f64 {
        let last = self.layers.len() - 1;
        s.act[0].copy_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = s.act.split_at_mut(l + 1);
            let out = &mut after[0];
            layer.affine_into(&before[l], out);
            if l != last {
                out.iter_mut().for_each(|a| *a = mish(*a));
            }
        }
        s.act[last + 1][0]
    }

    fn forward_scratch(&self, x: &[f64], s: &mut Scratch) -> f64 {
        let last = self.layers.len() - 1;
        s.act[0].copy_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = s.act.split_at_mut(l + 1);
            let out = &mut after[0];
            layer.affine_into(&before[l], out);
            if l != last {
                for (a, d) in out.iter_mut().zip(s.deriv[l].iter_mut()) {
                    let (v, dv) = activation::mish_with_derivative(*a);
                    *a = v;
                    *d = dv;
                }
            }
        }
        s.act[last + 1][0]
    }

    /// Forward then backward for one sample, adding `scale · (pred - y) · ∂pred/∂θ`
    /// into `grads`. Returns the prediction.
    fn accumulate(&self, x: &[f64], y: f64, scale: f64, grads: &mut Gradients, s: &mut Scratch) -> f64 {
        let pred = self.forward_scratch(x, s);
        let last = self.layers.len() - 1;
        s.delta[last][0] = scale * (pred - y);
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let (delta_lo, delta_hi) = s.delta.split_at_mut(l);
            let delta = &delta_hi[0];
            let input = &s.act[l];
            for (xi, grow) in input.iter().zip(grads.weights[l].chunks_exact_mut(layer.outputs)) {
                for (g, d) in grow.iter_mut().zip(delta.iter()) {
                    *g += xi * d;
                }
            }
            for (g, d) in grads.biases[l].iter_mut().zip(delta.iter()) {
                *g += d;
            }
            if l > 0 {
                let prev = &mut delta_lo[l - 1];
                for (i, (p, wrow)) in prev.iter_mut().zip(layer.weights.chunks_exact(layer.outputs)).enumerate() {
                    let back: f64 = wrow.iter().zip(delta.iter()).map(|(w, d)| w * d).sum();
                    *p = back * s.deriv[l - 1][i];
                }
            }
        }
        pred
    }
}

pub fn xavier_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Reusable per-sample buffers.
pub(crate) struct Scratch {
    act: Vec<Vec<f64>>,
    deriv: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Scratch {
    pub(crate) fn new(net: &Network) -> Self {
        let mut act = vec![vec![0.0; net.input_dim()]];
        act.extend(net.layers.iter().map(|l| vec![0.0; l.outputs]));
        Self {
            act,
            deriv: net.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            delta: net.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
        }
    }
}

/// A labeled network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<f64>,
    pub label: f64,
}

impl Sample {
    /// `None` when the vector has no label.
    pub fn from_vector(v: &FeatureVector) -> Option<Self> {
        Some(Self {
            inputs: v.to_inputs(),
            label: v.label_priority?,
        })
    }
}

pub fn mse(preds: &[f64], labels: &[f64]) -> Result<f64, NetError> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(NetError::LengthMismatch {
            left: preds.len(),
            right: labels.len(),
        });
    }
    Ok(preds.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / preds.len() as f64)
}

/// Gradient of the batch MSE with respect to every parameter.
pub fn backward(net: &Network, batch: &[Sample]) -> Result<Gradients, NetError> {
    let mut grads = Gradients::zeros_like(net);
    batch_gradients(net, batch, &mut grads, &mut Scratch::new(net))?;
    Ok(grads)
}

/// Overwrites `grads` with the MSE gradient over `batch`; returns the MSE.
pub(crate) fn batch_gradients(net: &Network, batch: &[Sample], grads: &mut Gradients, scratch: &mut Scratch) -> Result<f64, NetError> {
    batch_gradients_iter(net, batch.iter(), batch.len(), grads, scratch)
}

pub(crate) fn batch_gradients_iter<'a>(
    net: &Network,
    batch: impl Iterator<Item = &'a Sample>,
    len: usize,
    grads: &mut Gradients,
    scratch: &mut Scratch,
) -> Result<f64, NetError> {
    if len == 0 {
        return Err(NetError::EmptyTrainingSet);
    }
    grads.clear();
    let scale = 2.0 / len as f64;
    let mut sq = 0.0;
    for s in batch {
        net.check_input(&s.inputs)?;
        let pred = net.accumulate(&s.inputs, s.label, scale, grads, scratch);
        sq += (pred - s.label) * (pred - s.label);
    }
    Ok(sq / len as f64)
}

/// A trained network plus everything needed to featurize new suites.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub window_len: usize,
    pub normalizer: Normalizer,
    pub normalizer_mode: NormalizerMode,
    pub weight_kind: WeightKind,
    pub rng_seed: u64,
}

impl TrainedModel {
    /// Bounds to featurize `matrix` with under this model's normalizer mode.
    pub fn normalizer_for(&self, matrix: &StatusMatrix) -> Normalizer {
        match self.normalizer_mode {
            NormalizerMode::Suite => Normalizer::fit(matrix),
            NormalizerMode::Frozen => self.normalizer,
        }
    }

    /// Raw (unclamped) predictions for a batch of vectors.
    pub fn predict(&self, vectors: &[FeatureVector]) -> Result<Vec<f64>, NetError> {
        let inputs: Vec<Vec<f64>> = vectors.iter().map(FeatureVector::to_inputs).collect();
        self.network.predict_batch(inputs.iter().map(Vec::as_slice))
    }
}
