//! Optimization loop: Adam, a step learning-rate schedule, gradient
//! clipping, epoch bookkeeping, and evaluation.
//!
//! Determinism is load-bearing everywhere here. Batch shuffling draws from
//! a ChaCha stream indexed by the epoch number — not from a long-lived RNG —
//! so a run resumed from a checkpoint at epoch `e` sees exactly the batches
//! the uninterrupted run would have seen, and two runs with one seed produce
//! bitwise-identical reports.

pub mod checkpoint;

use crate::data::{make_batches, DataError, Sample};
use crate::grid::PatchGrid;
use crate::linalg::Real;
use crate::loss::{accumulative_ce, ce_loss_and_grad, softmax_tokens, NUM_CLASSES};
use crate::net::{BavitModel, ModelConfig, Params};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stream index base for per-epoch batch shuffling; keeps shuffle draws
/// disjoint from data-generation streams built on the same seed.
const SHUFFLE_STREAM_BASE: u64 = 1 << 48;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0} set is empty")]
    EmptyDataset(&'static str),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient in `{tensor}`")]
    NonFiniteGrad { tensor: String },
}

/// Adam moment decay rates and epsilon. The learning rate lives in
/// [`LrSchedule`], which hands a value to every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Step decay: `base_lr * gamma^floor(epoch / step_size)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub step_size: usize,
    pub gamma: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            step_size: 30,
            gamma: 0.1,
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.base_lr * self.gamma.powi((epoch / self.step_size) as i32)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "base_lr must be positive and finite, got {}",
                self.base_lr
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.step_size == 0 {
            return Err(TrainError::InvalidConfig(
                "step_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Adam with bias correction. Moment buffers reuse the [`Params`] container
/// so they walk, checkpoint, and restore exactly like the weights.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub cfg: AdamConfig,
    model_cfg: ModelConfig,
    m: Params<F>,
    v: Params<F>,
    step: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(model_cfg: &ModelConfig, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            model_cfg: *model_cfg,
            m: Params::zeros(model_cfg),
            v: Params::zeros(model_cfg),
            step: 0,
        }
    }

    /// Rebuilds optimizer state, e.g. from a checkpoint.
    pub fn restore(
        model_cfg: &ModelConfig,
        cfg: AdamConfig,
        m: Params<F>,
        v: Params<F>,
        step: u64,
    ) -> Self {
        Self {
            cfg,
            model_cfg: *model_cfg,
            m,
            v,
            step,
        }
    }

    pub fn state(&self) -> (&Params<F>, &Params<F>, u64) {
        (&self.m, &self.v, self.step)
    }

    /// One update: increments the step counter, refreshes both moments, and
    /// applies the bias-corrected move at learning rate `lr`.
    ///
    /// Every gradient value is checked first; a NaN or infinity anywhere
    /// rejects the whole step and names the offending tensor. Nothing —
    /// counter, moments, weights — changes on that path, which is what lets
    /// the trainer treat the error as a clean divergence signal.
    pub fn step(
        &mut self,
        params: &mut Params<F>,
        grads: &Params<F>,
        lr: f64,
    ) -> Result<(), TrainError> {
        for (ti, gt) in grads.tensors().into_iter().enumerate() {
            if gt.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteGrad {
                    tensor: crate::net::tensor_specs(&self.model_cfg)[ti].name.clone(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = F::from_f64(self.cfg.beta1);
        let b2 = F::from_f64(self.cfg.beta2);
        let one_minus_b1 = F::one() - b1;
        let one_minus_b2 = F::one() - b2;
        let corr1 = F::from_f64(1.0 - self.cfg.beta1.powi(t));
        let corr2 = F::from_f64(1.0 - self.cfg.beta2.powi(t));
        let eps = F::from_f64(self.cfg.eps);
        let lr = F::from_f64(lr);
        for ((pt, gt), (mt, vt)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()))
        {
            for i in 0..pt.len() {
                let g = gt[i];
                mt[i] = b1 * mt[i] + one_minus_b1 * g;
                vt[i] = b2 * vt[i] + one_minus_b2 * g * g;
                let m_hat = mt[i] / corr1;
                let v_hat = vt[i] / corr2;
                pt[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales the gradient in place when its global L2 norm exceeds
/// `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm<F: Real>(grads: &mut Params<F>, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale_all(F::from_f64(max_norm / norm));
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub schedule: LrSchedule,
    /// Global-norm gradient clip; `None` disables.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Stop once validation accuracy reaches this value.
    pub early_stop_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
            schedule: LrSchedule::default(),
            clip_norm: Some(1.0),
            seed: 0,
            early_stop_acc: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig(
                "batch_size must be at least 1".into(),
            ));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(TrainError::InvalidConfig(format!(
                    "clip_norm must be positive and finite, got {c}"
                )));
            }
        }
        if let Some(a) = self.early_stop_acc {
            if !(0.0..=1.0).contains(&a) {
                return Err(TrainError::InvalidConfig(format!(
                    "early_stop_acc must be in [0, 1], got {a}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub final_val_accuracy: f64,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
    pub diverged: bool,
    /// Human-readable reason when `diverged` is set.
    pub divergence_cause: Option<String>,
    pub history: Vec<EpochStats>,
    /// Wall time is inherently run-dependent, so it stays out of the
    /// serialized report to keep equal-seed runs byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Token-level evaluation: accuracy plus the foreground-centric precision
/// and recall, with the full confusion matrix (`[truth][prediction]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub loss: f64,
    pub accuracy: f64,
    pub fg_precision: f64,
    pub fg_recall: f64,
    pub bg_precision: f64,
    pub bg_recall: f64,
    pub confusion: [[u64; 2]; 2],
}

/// Runs the model over `samples` in fixed order and scores every token.
/// Prediction is the argmax of the two logits; an exact tie counts as
/// background.
pub fn evaluate<F: Real>(
    model: &BavitModel<F>,
    samples: &[Sample],
    batch_size: usize,
) -> Result<EvalReport, TrainError> {
    evaluate_with_postproc(model, samples, batch_size, None)
}

/// Same scoring as [`evaluate`], but when `cca` is given each image's
/// predicted label map is smoothed by the neighborhood vote before it is
/// compared with ground truth. The loss comes from the raw probabilities
/// either way; smoothing changes only the label decisions, and since it can
/// only turn background predictions into foreground, foreground recall never
/// drops relative to the unsmoothed run.
pub fn evaluate_with_postproc<F: Real>(
    model: &BavitModel<F>,
    samples: &[Sample],
    batch_size: usize,
    cca: Option<&crate::postproc::CcaConfig>,
) -> Result<EvalReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset("evaluation"));
    }
    let grid = model.cfg.grid;
    let tokens = grid.tokens();
    let mut confusion = [[0u64; 2]; 2];
    let mut loss_sum = 0.0f64;
    let mut token_count = 0u64;
    let mut x: Vec<F> = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        x.clear();
        let mut y: Vec<u8> = Vec::with_capacity(chunk.len() * tokens);
        for s in chunk {
            crate::data::patchify_into(&s.image, &grid, &mut x);
            y.extend_from_slice(s.labels.labels());
        }
        let out = model.forward(&x, chunk.len());
        let probs = softmax_tokens(&out.logits);
        loss_sum += accumulative_ce(&probs, &y).as_f64() * y.len() as f64;
        token_count += y.len() as u64;
        for img in 0..chunk.len() {
            let base = img * tokens;
            let mut preds: Vec<u8> = (0..tokens)
                .map(|t| {
                    let p_bg = out.logits[(base + t) * NUM_CLASSES];
                    let p_fg = out.logits[(base + t) * NUM_CLASSES + 1];
                    u8::from(p_fg > p_bg)
                })
                .collect();
            if let Some(cfg) = cca {
                let map = crate::grid::TokenLabelMap::new(grid, preds)
                    .expect("prediction length matches the grid");
                preds = crate::postproc::cca(&map, cfg).labels().to_vec();
            }
            for t in 0..tokens {
                confusion[y[base + t] as usize][preds[t] as usize] += 1;
            }
        }
    }
    let tn = confusion[0][0];
    let fp = confusion[0][1];
    let fnn = confusion[1][0];
    let tp = confusion[1][1];
    let div = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(EvalReport {
        loss: loss_sum / token_count as f64,
        accuracy: div(tn + tp, token_count),
        fg_precision: div(tp, tp + fp),
        fg_recall: div(tp, tp + fnn),
        bg_precision: div(tn, tn + fnn),
        bg_recall: div(tn, tn + fp),
        confusion,
    })
}

/// Owns the model, optimizer, and epoch counter for one training run.
pub struct Trainer<F> {
    pub model: BavitModel<F>,
    pub adam: Adam<F>,
    pub cfg: TrainConfig,
    /// Next epoch index to run; restored from checkpoints on resume.
    pub next_epoch: usize,
}

impl<F: Real> Trainer<F> {
    pub fn new(model: BavitModel<F>, cfg: TrainConfig) -> Self {
        let adam = Adam::new(&model.cfg, cfg.adam);
        Self {
            model,
            adam,
            cfg,
            next_epoch: 0,
        }
    }

    /// Reassembles a trainer mid-run (see [`checkpoint`]).
    pub fn resume(model: BavitModel<F>, adam: Adam<F>, cfg: TrainConfig, next_epoch: usize) -> Self {
        Self {
            model,
            adam,
            cfg,
            next_epoch,
        }
    }

    fn grid(&self) -> PatchGrid {
        self.model.cfg.grid
    }

    /// One pass over the training set; returns the mean token loss. A
    /// non-finite batch loss comes back as that non-finite value; a
    /// non-finite gradient surfaces as [`TrainError::NonFiniteGrad`].
    pub fn train_epoch(&mut self, train: &[Sample]) -> Result<f64, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyDataset("training"));
        }
        self.cfg.validate()?;
        let epoch = self.next_epoch;
        let lr = self.cfg.schedule.lr_at(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(SHUFFLE_STREAM_BASE + epoch as u64);
        let grid = self.grid();
        let batches = make_batches::<F>(train, &grid, self.cfg.batch_size, &mut rng)?;
        let mut loss_sum = 0.0f64;
        let mut token_count = 0u64;
        for batch in &batches {
            let out = self.model.forward(&batch.x, batch.batch);
            let (loss, d_logits) = ce_loss_and_grad(&out.logits, &batch.y);
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Ok(loss);
            }
            loss_sum += loss * batch.y.len() as f64;
            token_count += batch.y.len() as u64;
            let mut grads = self.model.backward(&out.cache, &d_logits);
            if let Some(max_norm) = self.cfg.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            self.adam.step(&mut self.model.params, &grads, lr)?;
        }
        self.next_epoch += 1;
        Ok(loss_sum / token_count as f64)
    }

    /// The full loop: epochs with per-epoch validation, optional early
    /// stopping, and divergence rollback. If an epoch produces a non-finite
    /// loss or gradient, the model and optimizer are restored to the end of
    /// the last good epoch — or to the state `fit` started from, when the
    /// very first epoch diverges — and training stops with `diverged` set.
    pub fn fit(&mut self, train: &[Sample], val: &[Sample]) -> Result<TrainReport, TrainError> {
        if val.is_empty() {
            return Err(TrainError::EmptyDataset("validation"));
        }
        self.cfg.validate()?;
        let start = std::time::Instant::now();
        let mut report = TrainReport::default();
        let mut last_good = (self.model.params.clone(), self.adam.clone(), self.next_epoch);
        while self.next_epoch < self.cfg.epochs {
            let epoch = self.next_epoch;
            let (train_loss, cause) = match self.train_epoch(train) {
                Ok(loss) if loss.is_finite() => (loss, None),
                Ok(loss) => (loss, Some(format!("loss {loss} at epoch {epoch}"))),
                Err(TrainError::NonFiniteGrad { tensor }) => (
                    f64::NAN,
                    Some(format!("non-finite gradient in `{tensor}` at epoch {epoch}")),
                ),
                Err(other) => return Err(other),
            };
            if let Some(cause) = cause {
                let (params, adam, good_epoch) = last_good;
                self.model.params = params;
                self.adam = adam;
                self.next_epoch = good_epoch;
                report.diverged = true;
                report.divergence_cause = Some(cause);
                break;
            }
            let eval = evaluate(&self.model, val, self.cfg.batch_size)?;
            report.history.push(EpochStats {
                epoch,
                lr: self.cfg.schedule.lr_at(epoch),
                train_loss,
                val_loss: eval.loss,
                val_accuracy: eval.accuracy,
            });
            report.epochs_run = epoch + 1;
            report.final_train_loss = train_loss;
            report.final_val_loss = eval.loss;
            report.final_val_accuracy = eval.accuracy;
            report.best_val_accuracy = report.best_val_accuracy.max(eval.accuracy);
            last_good = (self.model.params.clone(), self.adam.clone(), self.next_epoch);
            if let Some(target) = self.cfg.early_stop_acc {
                if eval.accuracy >= target {
                    report.stopped_early = true;
                    break;
                }
            }
        }
        report.wall_time_s = start.elapsed().as_secs_f64();
        Ok(report)
    }
}
