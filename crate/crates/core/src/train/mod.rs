//! Bin-weighted L1 loss, stratified splitting, Adam training with early
//! stopping, and grid search.

mod bins;
mod grid;
mod split;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bins::{bin_edges, bin_index, compute_bin_weights, l1, mse, weighted_l1, BinWeights, LossKind, DEFAULT_BINS};
pub use grid::{grid_search, grid_search_with, GridResult, GridSpec, LeaderboardEntry};
pub use split::{apportion, stratified_split, Part, SplitSpec, PARTS};

use crate::regressor::{backward, forward, predict_batch, sample_masks, FeatureSequence, ModelConfig, ModelParams, RegressorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("target {0} outside [-1, 1]")]
    InvalidTarget(f64),
    #[error("loss diverged at epoch {epoch}: {value}")]
    DivergedLoss { epoch: usize, value: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Regressor(#[from] RegressorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss: LossKind,
    pub n_bins: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 20,
            patience: 3,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss: LossKind::WeightedL1,
            n_bins: DEFAULT_BINS,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TrainError::InvalidConfig("batch_size and max_epochs must be positive".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(TrainError::InvalidConfig(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, tc: &TrainConfig) -> Self {
        Adam {
            lr: tc.learning_rate,
            beta1: tc.beta1,
            beta2: tc.beta2,
            eps: tc.epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation loss; stops after `patience` epochs without improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    bad: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            bad: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.bad = 0;
            StopDecision::Improved
        } else {
            self.bad += 1;
            if self.bad >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub history: History,
    pub bin_weights: BinWeights,
}

/// Samples per gradient shard. Fixed so the summation order does not depend on thread count.
const GRAD_SHARD: usize = 8;

/// Loss and mean gradient over one minibatch, in training mode.
fn batch_gradient(
    params: &ModelParams,
    batch: &[&FeatureSequence],
    tc: &TrainConfig,
    bw: &BinWeights,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>), TrainError> {
    let masks: Vec<_> = batch
        .iter()
        .map(|s| sample_masks(&params.config, s.len.min(params.config.seq_cap), rng))
        .collect();
    let acts = batch
        .par_iter()
        .zip(&masks)
        .map(|(s, m)| forward(params, s, m.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let pred: Vec<f64> = acts.iter().map(|a| a.output).collect();
    let target: Vec<f64> = batch.iter().map(|s| s.target).collect();
    let (loss, dy) = tc.loss.value_and_grad(&pred, &target, bw);
    let n = params.num_params();
    let idx: Vec<usize> = (0..batch.len()).collect();
    let shards: Vec<Vec<f64>> = idx
        .par_chunks(GRAD_SHARD)
        .map(|chunk| {
            let mut g = vec![0.0; n];
            for &i in chunk {
                if dy[i] != 0.0 {
                    backward(params, batch[i], &acts[i], masks[i].as_ref(), dy[i], &mut g);
                }
            }
            g
        })
        .collect();
    let mut grad = vec![0.0; n];
    for s in &shards {
        for (a, b) in grad.iter_mut().zip(s) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

/// Loss of eval-mode predictions.
pub fn evaluate_loss(params: &ModelParams, data: &[FeatureSequence], loss: LossKind, bw: &BinWeights) -> Result<f64, TrainError> {
    let pred = predict_batch(params, data)?;
    let target: Vec<f64> = data.iter().map(|s| s.target).collect();
    Ok(loss.value(&pred, &target, bw))
}

/// Trains from a seeded initialisation and returns the best-validation parameters.
pub fn fit(
    config: ModelConfig,
    tc: &TrainConfig,
    train: &[FeatureSequence],
    val: &[FeatureSequence],
    bw: &BinWeights,
) -> Result<TrainedModel, TrainError> {
    tc.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut params = ModelParams::init(config, tc.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0x5eed_0f_7a1e);
    let mut adam = Adam::new(params.num_params(), tc);
    let mut stopper = EarlyStopping::new(tc.patience);
    let mut best = params.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    if val.is_empty() {
        log::warn!("empty validation split; early stopping uses the training loss");
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<&FeatureSequence> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grad) = batch_gradient(&params, &batch, tc, bw, &mut rng)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::DivergedLoss { epoch, value: loss });
            }
            total += loss * chunk.len() as f64;
            adam.step(&mut params.data, &grad);
        }
        let train_loss = total / train.len() as f64;
        let val_loss = if val.is_empty() {
            evaluate_loss(&params, train, tc.loss, bw)?
        } else {
            evaluate_loss(&params, val, tc.loss, bw)?
        };
        if !val_loss.is_finite() {
            return Err(TrainError::DivergedLoss { epoch, value: val_loss });
        }
        log::info!("{} epoch {epoch}: train {train_loss:.5} val {val_loss:.5}", config.label());
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = epoch < tc.max_epochs;
                break;
            }
        }
    }
    Ok(TrainedModel {
        params: best,
        history: History {
            epochs,
            best_epoch: stopper.best_epoch,
            best_val_loss: stopper.best,
            stopped_early,
        },
        bin_weights: bw.clone(),
    })
}
