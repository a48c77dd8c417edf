//! A small neural-network engine: the layers needed by the outcome and
//! congruence classifiers, cross-entropy loss, SGD and Adam, a training loop
//! with early stopping, and finite-difference gradient checking.

mod gradcheck;
mod layers;
mod loss;
mod lstm;
mod optim;
mod train;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{ModelWeights, WeightLayer};

pub use gradcheck::{analytic_gradients, compare_gradients, gradient_check, numeric_gradients, sample_loss};
pub use layers::{dropout, glorot_uniform, relu, relu_backward, softmax, softmax_backward, Conv1d, Dense, MaxPool1d};
pub use loss::{cross_entropy_grad, weighted_cross_entropy, PROB_FLOOR};
pub use lstm::{Lstm, LstmCache};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{evaluate_loss, fit, EarlyStopping, EpochLog, Sample, TrainConfig, TrainLog};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },
    #[error("empty {0} set")]
    EmptyData(&'static str),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("incompatible weights: {0}")]
    Weights(String),
}

/// A dense row-major array of 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// A `[rows, cols]` matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(NnError::ShapeMismatch("ragged rows".into()));
        }
        Ok(Tensor {
            shape: vec![rows.len(), cols],
            data: rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows and columns of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize), NnError> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(NnError::ShapeMismatch(format!("expected 2-D tensor, got {:?}", self.shape))),
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A classifier ending in a softmax.
///
/// `backward` accumulates parameter gradients into `grads`, which are laid out
/// like `params`.
pub trait Network: Clone {
    type Cache;

    /// Accepted `[time, features]` input shape.
    fn input_shape(&self) -> (usize, usize);

    fn num_classes(&self) -> usize;

    /// Named parameters in a fixed order.
    fn params(&self) -> Vec<(&'static str, &Tensor)>;

    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    /// Class probabilities. Dropout is active only when `rng` is given.
    fn forward(&self, x: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<(Vec<f64>, Self::Cache), NnError>;

    /// Backpropagates `dprobs`, the loss gradient with respect to the output
    /// probabilities.
    fn backward(&self, cache: &Self::Cache, dprobs: &[f64], grads: &mut [Tensor]);

    fn predict(&self, x: &Tensor) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(x, None)?.0)
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NnError> {
        let (t, f) = self.input_shape();
        if x.shape() != [t, f] {
            return Err(NnError::ShapeMismatch(format!(
                "model expects input ({t}, {f}), got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    fn zero_grads(&self) -> Vec<Tensor> {
        self.params().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect()
    }

    fn to_weights(&self) -> ModelWeights {
        let layers = self
            .params()
            .into_iter()
            .map(|(name, t)| WeightLayer {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                values: t.data().to_vec(),
            })
            .collect();
        ModelWeights::new(layers).expect("tensor shapes are consistent")
    }

    /// Loads parameters by name; every parameter must be present with the
    /// same shape.
    fn set_weights(&mut self, weights: &ModelWeights) -> Result<(), NnError> {
        let names: Vec<&'static str> = self.params().iter().map(|(n, _)| *n).collect();
        for (name, param) in names.into_iter().zip(self.params_mut()) {
            let layer = weights
                .layer(name)
                .ok_or_else(|| NnError::Weights(format!("missing layer {name}")))?;
            if layer.shape != param.shape() {
                return Err(NnError::Weights(format!(
                    "layer {name}: expected shape {:?}, file has {:?}",
                    param.shape(),
                    layer.shape
                )));
            }
            param.data_mut().copy_from_slice(&layer.values);
        }
        Ok(())
    }
}

/// Index of the largest value; lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Flattened input followed by one dense layer and a softmax. Used for
/// small experiments and as a reference network in tests.
#[derive(Clone, Debug)]
pub struct DenseSoftmax {
    pub dense: Dense,
    shape: (usize, usize),
}

impl DenseSoftmax {
    pub fn new(steps: usize, features: usize, classes: usize, rng: &mut ChaCha8Rng) -> Self {
        DenseSoftmax {
            dense: Dense::new(steps * features, classes, rng),
            shape: (steps, features),
        }
    }
}

impl Network for DenseSoftmax {
    type Cache = (Vec<f64>, Vec<f64>);

    fn input_shape(&self) -> (usize, usize) {
        self.shape
    }

    fn num_classes(&self) -> usize {
        self.dense.outputs()
    }

    fn params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("dense.weight", &self.dense.weight), ("dense.bias", &self.dense.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.dense.weight, &mut self.dense.bias]
    }

    fn forward(&self, x: &Tensor, _rng: Option<&mut ChaCha8Rng>) -> Result<(Vec<f64>, Self::Cache), NnError> {
        self.check_input(x)?;
        let probs = softmax(&self.dense.forward(x.data()));
        Ok((probs.clone(), (x.data().to_vec(), probs)))
    }

    fn backward(&self, (x, probs): &Self::Cache, dprobs: &[f64], grads: &mut [Tensor]) {
        let dlogits = softmax_backward(probs, dprobs);
        let (gw, gb) = grads.split_at_mut(1);
        self.dense.backward(x, &dlogits, &mut gw[0], &mut gb[0]);
    }
}
