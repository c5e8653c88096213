use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::FeatureConfig;
use crate::rng::rng_from;

pub const MLP_HIDDEN: [usize; 4] = [10, 10, 10, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Mlp,
}

/// Dense layer `y = W x + b` with `W` stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>());
        }
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub init_seed: u64,
    pub train_seed: u64,
    pub epsilon: f64,
    pub n_samples: usize,
    pub epochs_run: usize,
}

/// Per-request prize predictor shared across requests. The output is in
/// prize units relative to the instance's prize scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrizeModel {
    pub kind: ModelKind,
    pub feature_config: FeatureConfig,
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("feature row {row} has dimension {got}, model expects {expected}")]
    Dimension { row: usize, got: usize, expected: usize },
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Pre-activations and activations of one forward pass.
struct Trace {
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl PrizeModel {
    /// Weights and biases uniform in ±1/√fan_in.
    pub fn init(kind: ModelKind, feature_config: FeatureConfig, seed: u64) -> Self {
        let d = feature_config.set.dim();
        let dims: Vec<usize> = match kind {
            ModelKind::Linear => vec![d, 1],
            ModelKind::Mlp => std::iter::once(d).chain(MLP_HIDDEN).chain(std::iter::once(1)).collect(),
        };
        let mut rng = rng_from(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut layer = Layer::zeros(w[0], w[1]);
                for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                    *v = rng.random_range(-bound..bound);
                }
                layer
            })
            .collect();
        PrizeModel {
            kind,
            feature_config,
            layers,
            metadata: TrainingMetadata {
                init_seed: seed,
                ..TrainingMetadata::default()
            },
        }
    }

    /// A linear model with all weights zero.
    pub fn zero_linear(feature_config: FeatureConfig) -> Self {
        let d = feature_config.set.dim();
        PrizeModel {
            kind: ModelKind::Linear,
            feature_config,
            layers: vec![Layer::zeros(d, 1)],
            metadata: TrainingMetadata::default(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.feature_config.validate().map_err(ModelError::Invalid)?;
        if self.input_dim() != self.feature_config.set.dim() {
            return Err(ModelError::Invalid("first layer does not match the feature dimension".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(ModelError::Invalid(format!("layers {i} and {} do not chain", i + 1)));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(ModelError::Invalid(format!("layer {i} has inconsistent shapes")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { layer: i });
            }
        }
        if self.layers.last().map(|l| l.outputs) != Some(1) {
            return Err(ModelError::Invalid("output layer must be scalar".into()));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut activations = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(activations.last().unwrap(), &mut z);
            let a = if i == last { z.clone() } else { z.iter().map(|v| v.max(0.0)).collect() };
            pre.push(z);
            activations.push(a);
        }
        Trace { activations, pre }
    }

    fn check_rows(&self, features: &[Vec<f64>]) -> Result<(), ModelError> {
        let expected = self.input_dim();
        match features.iter().position(|r| r.len() != expected) {
            Some(row) => Err(ModelError::Dimension {
                row,
                got: features[row].len(),
                expected,
            }),
            None => Ok(()),
        }
    }

    /// Output for one feature row.
    pub fn forward(&self, x: &[f64]) -> f64 {
        self.trace(x).activations.last().unwrap()[0]
    }

    /// One prize per feature row, computed independently.
    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        self.check_rows(features)?;
        let out: Vec<f64> = features.iter().map(|x| self.forward(x)).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { layer: self.layers.len() - 1 });
        }
        Ok(out)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params(), "parameter vector length");
        let mut k = 0;
        for l in self.layers.iter_mut() {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = params[k];
                k += 1;
            }
        }
    }

    /// Gradient of `Σ_r grad_theta[r] · θ_r` with respect to the flattened
    /// parameters.
    pub fn backprop(&self, features: &[Vec<f64>], grad_theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_rows(features)?;
        assert_eq!(features.len(), grad_theta.len(), "one upstream gradient per row");
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        let last = self.layers.len() - 1;
        for (x, &g) in features.iter().zip(grad_theta) {
            if g == 0.0 {
                continue;
            }
            let t = self.trace(x);
            let mut delta = vec![g];
            for i in (0..=last).rev() {
                let layer = &self.layers[i];
                if i != last {
                    for (d, z) in delta.iter_mut().zip(&t.pre[i]) {
                        if *z <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                let input = &t.activations[i];
                let gl = &mut grads[i];
                for o in 0..layer.outputs {
                    gl.bias[o] += delta[o];
                    let row = &mut gl.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, a) in row.iter_mut().zip(input) {
                        *w += delta[o] * a;
                    }
                }
                if i > 0 {
                    let mut next = vec![0.0; layer.inputs];
                    for o in 0..layer.outputs {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (n, w) in next.iter_mut().zip(row) {
                            *n += delta[o] * w;
                        }
                    }
                    if next.iter().any(|v| !v.is_finite()) {
                        return Err(ModelError::NonFinite { layer: i });
                    }
                    delta = next;
                }
            }
        }
        let flat: Vec<f64> = grads.iter().flat_map(|l| l.weights.iter().chain(&l.bias).copied()).collect();
        if let Some(k) = flat.iter().position(|v| !v.is_finite()) {
            let mut acc = 0;
            let layer = grads.iter().position(|l| {
                acc += l.n_params();
                k < acc
            });
            return Err(ModelError::NonFinite { layer: layer.unwrap_or(0) });
        }
        Ok(flat)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: PrizeModel = serde_json::from_str(text).map_err(|e| ModelError::Invalid(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

/// Model prizes for already standardized feature rows.
pub fn predict_prizes(model: &PrizeModel, features: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
    model.predict(features)
}

pub fn backprop(model: &PrizeModel, features: &[Vec<f64>], grad_theta: &[f64]) -> Result<Vec<f64>, ModelError> {
    model.backprop(features, grad_theta)
}
