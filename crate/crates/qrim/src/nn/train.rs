//! Mini-batch training loop: Adam on the MSE between denoised and clean
//! normalized maps, with early stopping on validation MSE. Deterministic for
//! a fixed seed: shuffling uses a dedicated seeded generator and all batch
//! reductions run in index order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::nn::adam::{AdamConfig, AdamState};
use crate::nn::model::{mse_grad, mse_loss, DenoiserModel};
use crate::nn::tensor::{Scalar, Tensor};

/// A set of normalized two-channel snapshots and their clean targets, stored
/// as flat `[2 * rows * cols]` buffers.
#[derive(Debug, Clone)]
pub struct PatchSet<S> {
    pub rows: usize,
    pub cols: usize,
    pub inputs: Vec<Vec<S>>,
    pub targets: Vec<Vec<S>>,
    /// Per-snapshot normalization scale (max magnitude of the raw input map).
    pub scales: Vec<f64>,
}

impl<S: Scalar> PatchSet<S> {
    pub fn new(rows: usize, cols: usize) -> Self {
        PatchSet { rows, cols, inputs: Vec::new(), targets: Vec::new(), scales: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Stack the given snapshot indices into a `[k, 2, rows, cols]` batch.
    pub fn batch(&self, idx: &[usize]) -> (Tensor<S>, Tensor<S>) {
        let plane = 2 * self.rows * self.cols;
        let mut x = Vec::with_capacity(idx.len() * plane);
        let mut y = Vec::with_capacity(idx.len() * plane);
        for &i in idx {
            x.extend_from_slice(&self.inputs[i]);
            y.extend_from_slice(&self.targets[i]);
        }
        let shape = [idx.len(), 2, self.rows, self.cols];
        (
            Tensor::from_vec(shape, x).expect("batch shape"),
            Tensor::from_vec(shape, y).expect("batch shape"),
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 1e-3, batch: 8, max_epochs: 40, patience: 5, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub epochs: usize,
    pub best_val_mse: f64,
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    /// True when training aborted on a non-finite loss.
    pub failed: bool,
}

/// Mean MSE of the model over a patch set (eval mode).
pub fn evaluate_mse<S: Scalar>(
    model: &DenoiserModel<S>,
    set: &PatchSet<S>,
    batch: usize,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Usage("cannot evaluate on an empty set".into()));
    }
    let mut total = 0.0;
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, y) = set.batch(chunk);
        let out = model.forward_eval(&x)?;
        total += mse_loss(&out, &y)?.as_f64() * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}

/// Train until the epoch budget or patience runs out; the model is left at
/// the best-validation snapshot. A non-finite loss marks the outcome failed
/// and stops immediately.
pub fn fit<S: Scalar>(
    model: &mut DenoiserModel<S>,
    train: &PatchSet<S>,
    val: &PatchSet<S>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Usage("training needs non-empty train and validation sets".into()));
    }
    let adam_cfg = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut adam = AdamState::new();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::INFINITY, model.clone());
    let mut stale = 0usize;
    let mut outcome = TrainOutcome {
        epochs: 0,
        best_val_mse: f64::INFINITY,
        train_mse: Vec::new(),
        val_mse: Vec::new(),
        failed: false,
    };

    'epochs: for _epoch in 0..cfg.max_epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in indices.chunks(cfg.batch.max(1)) {
            if chunk.len() < 2 {
                // BatchNorm training mode needs at least two samples.
                continue;
            }
            let (x, y) = train.batch(chunk);
            let pred = model.forward_train(&x)?;
            let loss = match mse_loss(&pred, &y) {
                Ok(l) => l.as_f64(),
                Err(Error::Numerics(_)) => {
                    outcome.failed = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            epoch_loss += loss * chunk.len() as f64;
            seen += chunk.len();
            let grad = mse_grad(&pred, &y)?;
            model.backward(&grad)?;
            model.adam_step(&mut adam, &adam_cfg);
        }
        outcome.epochs += 1;
        outcome.train_mse.push(if seen > 0 { epoch_loss / seen as f64 } else { f64::NAN });

        let val_mse = evaluate_mse(model, val, cfg.batch)?;
        outcome.val_mse.push(val_mse);
        if !val_mse.is_finite() {
            outcome.failed = true;
            break;
        }
        if val_mse < best.0 {
            best = (val_mse, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                break;
            }
        }
    }

    if best.0.is_finite() {
        *model = best.1;
        outcome.best_val_mse = best.0;
    }
    Ok(outcome)
}
