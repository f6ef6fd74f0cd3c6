//! Mini-batch training with early stopping and JSON checkpoints.
//!
//! Optimization happens in normalized units. Runs are reproducible: weight
//! initialization and epoch shuffling derive from the configured seed, and
//! batch gradients reduce over a fixed chunk partition in index order, so
//! the result does not depend on thread count.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{self, HyperParams, ModelWeights, NnError};
use crate::preprocess::{PreprocessError, ScalerParams, Split, Window, WindowedDataset};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Gradient reductions split each batch into this many fixed chunks; the
/// chunks are summed in order, independent of worker threads.
const REDUCTION_CHUNKS: usize = 8;

/// Decorrelates the shuffle stream from the weight-init stream.
const SHUFFLE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("prediction and target lengths differ: {prediction} vs {target}")]
    LengthMismatch { prediction: usize, target: usize },
    #[error("loss of empty vectors is undefined")]
    Empty,
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("dataset windows are {data_lookback}/{data_horizon} but the model expects {model_lookback}/{model_horizon}")]
    DatasetMismatch {
        data_lookback: usize,
        data_horizon: usize,
        model_lookback: usize,
        model_horizon: usize,
    },
    #[error("{split:?} split is empty")]
    EmptySplit { split: Split },
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("optimizer state does not match parameter shapes")]
    StateMismatch,
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("unsupported checkpoint schema version {0}")]
    UnsupportedSchema(u32),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Optimizer choice; Adam constants ride along with the tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    Sgd,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hyper: HyperParams,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Global L2 clip applied to each batch-mean gradient; `None` disables.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(hyper: HyperParams) -> Self {
        Self {
            hyper,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            max_epochs: 100,
            patience: 10,
            grad_clip: Some(5.0),
            seed: 42,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        self.hyper.validate()?;
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::BadConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(TrainError::BadConfig(
                "patience and max_epochs must be at least 1".into(),
            ));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip.is_finite() && clip > 0.0) {
                return Err(TrainError::BadConfig(format!(
                    "grad_clip must be positive, got {clip}"
                )));
            }
        }
        Ok(())
    }
}

/// Mean squared error over the forecast horizon: `(1/P) Σ (y - ŷ)²`.
pub fn mse_loss(prediction: &[f64], target: &[f64]) -> Result<f64, TrainError> {
    if prediction.len() != target.len() {
        return Err(TrainError::LengthMismatch {
            prediction: prediction.len(),
            target: target.len(),
        });
    }
    if prediction.is_empty() {
        return Err(TrainError::Empty);
    }
    let sum: f64 = prediction
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / prediction.len() as f64)
}

/// First and second moment estimates, one buffer per parameter tensor in
/// canonical order.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(weights: &ModelWeights) -> Self {
        let shapes: Vec<usize> = weights.param_slices().iter().map(|s| s.len()).collect();
        Self {
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    weights: &mut ModelWeights,
    gradients: &ModelWeights,
    state: &mut AdamState,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<(), TrainError> {
    let grads = gradients.param_slices();
    {
        let params = weights.param_slices();
        let aligned = params.len() == grads.len()
            && params.len() == state.m.len()
            && params
                .iter()
                .zip(&grads)
                .zip(&state.m)
                .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
        if !aligned {
            return Err(TrainError::StateMismatch);
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);

    for ((param, grad), (m, v)) in weights
        .param_slices_mut()
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            param[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

/// Plain gradient-descent update.
pub fn sgd_step(
    weights: &mut ModelWeights,
    gradients: &ModelWeights,
    learning_rate: f64,
) -> Result<(), TrainError> {
    let grads = gradients.param_slices();
    let mut params = weights.param_slices_mut();
    if params.len() != grads.len() || params.iter().zip(&grads).any(|(p, g)| p.len() != g.len()) {
        return Err(TrainError::StateMismatch);
    }
    for (param, grad) in params.iter_mut().zip(grads) {
        for (p, g) in param.iter_mut().zip(grad.iter()) {
            *p -= learning_rate * g;
        }
    }
    Ok(())
}

fn add_gradients(acc: &mut ModelWeights, delta: &ModelWeights) {
    for (dst, src) in acc.param_slices_mut().into_iter().zip(delta.param_slices()) {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
}

fn scale_gradients(grads: &mut ModelWeights, factor: f64) {
    for slice in grads.param_slices_mut() {
        for g in slice {
            *g *= factor;
        }
    }
}

/// Scales the gradient down to `max_norm` when its global L2 norm exceeds
/// it; returns the pre-clip norm.
pub fn clip_gradients(grads: &mut ModelWeights, max_norm: f64) -> f64 {
    let norm: f64 = grads
        .param_slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        scale_gradients(grads, max_norm / norm);
    }
    norm
}

/// Mean loss and summed gradients over one batch.
///
/// The batch is cut into [`REDUCTION_CHUNKS`] fixed contiguous chunks;
/// chunks accumulate sequentially and are merged in chunk order, so the
/// floating-point result is identical however many threads run.
fn batch_gradients(
    windows: &[Window],
    batch: &[usize],
    weights: &ModelWeights,
) -> Result<(ModelWeights, f64), TrainError> {
    let chunk_len = batch.len().div_ceil(REDUCTION_CHUNKS).max(1);
    let partials: Vec<Result<(ModelWeights, f64), NnError>> = batch
        .par_chunks(chunk_len)
        .map(|indices| {
            let mut acc = weights.zeros_like();
            let mut loss = 0.0;
            for &i in indices {
                let out = nn::backward(windows[i].history(), weights, windows[i].target())?;
                add_gradients(&mut acc, &out.gradients);
                loss += out.loss;
            }
            Ok((acc, loss))
        })
        .collect();

    let mut total = weights.zeros_like();
    let mut loss_sum = 0.0;
    for partial in partials {
        let (grads, loss) = partial?;
        add_gradients(&mut total, &grads);
        loss_sum += loss;
    }
    scale_gradients(&mut total, 1.0 / batch.len() as f64);
    Ok((total, loss_sum / batch.len() as f64))
}

/// Mean validation loss under the current weights.
fn split_loss(windows: &[Window], weights: &ModelWeights) -> Result<f64, TrainError> {
    let losses: Vec<Result<f64, TrainError>> = windows
        .par_iter()
        .map(|w| {
            let prediction = nn::forward(w.history(), weights)?;
            mse_loss(&prediction, w.target())
        })
        .collect();
    let mut sum = 0.0;
    for loss in losses {
        sum += loss?;
    }
    Ok(sum / windows.len() as f64)
}

/// Per-epoch losses in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Zero-based index of the epoch whose weights were returned.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }

    /// `epoch,train_loss,val_loss` rows, epochs numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, t, v));
        }
        out
    }
}

/// Trains from scratch on the train split, validating every epoch.
///
/// Window order is reshuffled each epoch by a generator derived from the
/// run seed. Training stops at `max_epochs` or once validation loss has
/// failed to improve for `patience` consecutive epochs; the weights from
/// the best validation epoch are returned.
pub fn train(
    config: &TrainConfig,
    data: &WindowedDataset,
) -> Result<(ModelWeights, TrainHistory), TrainError> {
    config.validate()?;
    if data.lookback() != config.hyper.lookback || data.horizon() != config.hyper.horizon {
        return Err(TrainError::DatasetMismatch {
            data_lookback: data.lookback(),
            data_horizon: data.horizon(),
            model_lookback: config.hyper.lookback,
            model_horizon: config.hyper.horizon,
        });
    }
    let train_windows = data.slice(Split::Train)?;
    let val_windows = data.slice(Split::Val)?;
    for (split, windows) in [
        (Split::Train, train_windows),
        (Split::Val, val_windows),
        (Split::Test, data.slice(Split::Test)?),
    ] {
        if windows.is_empty() {
            return Err(TrainError::EmptySplit { split });
        }
    }

    let mut weights = nn::init_weights(&config.hyper, config.seed)?;
    let mut adam = AdamState::new(&weights);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();

    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
    };
    let mut best: Option<(f64, ModelWeights)> = None;
    let mut epochs_since_improvement = 0usize;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (mut grads, batch_loss) = batch_gradients(train_windows, batch, &weights)?;
            epoch_loss += batch_loss * batch.len() as f64;
            if let Some(max_norm) = config.grad_clip {
                clip_gradients(&mut grads, max_norm);
            }
            match config.optimizer {
                OptimizerKind::Adam {
                    beta1,
                    beta2,
                    epsilon,
                } => adam_step(
                    &mut weights,
                    &grads,
                    &mut adam,
                    config.learning_rate,
                    beta1,
                    beta2,
                    epsilon,
                )?,
                OptimizerKind::Sgd => sgd_step(&mut weights, &grads, config.learning_rate)?,
            }
        }
        let train_loss = epoch_loss / train_windows.len() as f64;
        let val_loss = split_loss(val_windows, &weights)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(TrainError::Diverged { epoch: epoch + 1 });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);

        let improved = best
            .as_ref()
            .is_none_or(|(best_val, _)| val_loss < *best_val);
        if improved {
            best = Some((val_loss, weights.clone()));
            history.best_epoch = epoch;
            epochs_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
            if epochs_since_improvement >= config.patience {
                break;
            }
        }
    }

    let (_, best_weights) = best.expect("at least one epoch ran");
    Ok((best_weights, history))
}

/// Portable model snapshot: weights, the scaler that maps them back to
/// watts, and the config that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub model: ModelWeights,
    pub scaler: ScalerParams,
    pub train_config: TrainConfig,
}

impl Checkpoint {
    pub fn new(model: ModelWeights, scaler: ScalerParams, train_config: TrainConfig) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            model,
            scaler,
            train_config,
        }
    }

    pub fn to_json(&self) -> Result<String, TrainError> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        Ok(json)
    }

    pub fn from_json(json: &str) -> Result<Self, TrainError> {
        let checkpoint: Checkpoint = serde_json::from_str(json)?;
        if checkpoint.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(TrainError::UnsupportedSchema(checkpoint.schema_version));
        }
        checkpoint
            .model
            .validate()
            .map_err(|e| TrainError::BadCheckpoint(e.to_string()))?;
        ScalerParams::new(checkpoint.scaler.min(), checkpoint.scaler.max())
            .map_err(|e| TrainError::BadCheckpoint(e.to_string()))?;
        Ok(checkpoint)
    }
}

/// Serializes weights + scaler + config as JSON. Tensor values keep full
/// double-precision round-trip fidelity, so save → load → save is
/// byte-identical.
pub fn save_checkpoint(
    weights: &ModelWeights,
    scaler: &ScalerParams,
    config: &TrainConfig,
    path: &Path,
) -> Result<(), TrainError> {
    let checkpoint = Checkpoint::new(weights.clone(), *scaler, config.clone());
    fs::write(path, checkpoint.to_json()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    Checkpoint::from_json(&fs::read_to_string(path)?)
}
