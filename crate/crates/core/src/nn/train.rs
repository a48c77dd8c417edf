use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cross_entropy_grad, Network, NnError, Optimizer, OptimizerKind, Tensor};

/// One labelled input.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Per-class loss weights for training batches.
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 5,
            optimizer: OptimizerKind::adam(),
            learning_rate: 2e-3,
            patience: 20,
            max_epochs: 200,
            seed: 0,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.patience == 0 {
            return Err(NnError::InvalidConfig("patience must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(NnError::InvalidConfig("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Tracks the best validation loss and signals when `patience` epochs pass
/// without a strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since: 0,
        }
    }

    /// Records an epoch's validation loss; returns `true` if it is a new best.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since = 0;
            true
        } else {
            self.since += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Unweighted mean cross-entropy with dropout off.
pub fn evaluate_loss<N: Network>(model: &N, samples: &[Sample]) -> Result<f64, NnError> {
    let mut total = 0.0;
    for s in samples {
        let probs = model.predict(&s.input)?;
        total += cross_entropy_grad(&probs, s.label, 1.0).0;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch training with per-epoch shuffling and early stopping on the
/// validation loss. On return `model` holds the best-validation weights.
pub fn fit<N: Network>(
    model: &mut N,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
) -> Result<TrainLog, NnError> {
    config.validate()?;
    if train.is_empty() {
        return Err(NnError::EmptyData("training"));
    }
    if val.is_empty() {
        return Err(NnError::EmptyData("validation"));
    }
    let classes = model.num_classes();
    if let Some(w) = &config.class_weights {
        if w.len() != classes {
            return Err(NnError::InvalidConfig(format!("{} class weights for {classes} classes", w.len())));
        }
    }
    if let Some(s) = train.iter().chain(val).find(|s| s.label >= classes) {
        return Err(NnError::ShapeMismatch(format!("label {} out of range", s.label)));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(1);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::new();
    let mut grads = model.zero_grads();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut train_total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| g.fill(0.0));
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &train[i];
                let (probs, cache) = model.forward(&s.input, Some(&mut dropout_rng))?;
                let w = config.class_weights.as_ref().map_or(1.0, |w| w[s.label]);
                let (loss, mut dprobs) = cross_entropy_grad(&probs, s.label, w);
                train_total += loss;
                dprobs.iter_mut().for_each(|d| *d *= scale);
                model.backward(&cache, &dprobs, &mut grads);
            }
            optimizer.step(&mut model.params_mut(), &grads)?;
        }
        let train_loss = train_total / train.len() as f64;
        let val_loss = evaluate_loss(model, val)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(NnError::Diverged { epoch });
        }
        epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        if stopper.observe(epoch, val_loss) {
            best = model.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }
    *model = best;
    Ok(TrainLog {
        stopped_early: stopper.should_stop(),
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
        epochs,
    })
}
