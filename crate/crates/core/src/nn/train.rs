use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::loss::{bce_loss_slice, bce_with_sigmoid_grad};
use super::model::{PhaseNorm, SalienceModel};
use super::patches::{assemble_batch, patch_offsets, sample_patches, PatchRef, TrainExample};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patch_frames: usize,
    pub early_stop_patience: usize,
    /// Random windows drawn from each training file per epoch.
    pub patches_per_file: usize,
    /// Fixed windows per validation file, drawn once before training.
    pub val_patches_per_file: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            max_epochs: 100,
            batch_size: 16,
            patch_frames: 50,
            early_stop_patience: 25,
            patches_per_file: 4,
            val_patches_per_file: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patch_frames == 0 || self.patches_per_file == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size, patch length, patches per file and epochs must be positive".into()));
        }
        if self.early_stop_patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "early-stop patience {} must be below max epochs {}",
                self.early_stop_patience, self.max_epochs
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Tracks the best validation loss and decides when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            waited: 0,
        }
    }

    /// Records an epoch's validation loss; returns `true` if it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.waited = 0;
            true
        } else {
            self.waited += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.waited >= self.patience
    }
}

/// Mean loss over fixed validation windows, inference mode.
fn validation_loss(model: &SalienceModel, val: &[TrainExample], patches: &[PatchRef], cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in patches.chunks(cfg.batch_size) {
        let (input, target) = assemble_batch(model, val, chunk, cfg.patch_frames)?;
        let out = model.forward(&input)?;
        total += bce_loss_slice(&target.data, &out.data)? * target.data.len() as f64;
        count += target.data.len();
    }
    Ok(if count == 0 { f64::NAN } else { total / count as f64 })
}

/// Fits per-harmonic phase normalization on the training examples.
pub fn fit_phase_norm(train: &[TrainExample]) -> Option<PhaseNorm> {
    let phases: Vec<_> = train.iter().filter_map(|e| e.features.phase_diff.as_ref()).collect();
    (!phases.is_empty()).then(|| PhaseNorm::fit(phases))
}

/// Minimizes binary cross-entropy on random training patches with Adam, evaluating the
/// validation loss after every epoch. Stops after `early_stop_patience` epochs without
/// improvement and leaves the model holding the weights of its best validation epoch.
///
/// `on_epoch` is called after each epoch with the record just produced.
pub fn train_with(
    model: &mut SalienceModel,
    train: &[TrainExample],
    val: &[TrainExample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Training("training and validation sets must be non-empty".into()));
    }
    if model.architecture.uses_phase() {
        model.phase_norm = Some(
            fit_phase_norm(train).ok_or_else(|| Error::Training(format!("{} needs phase features", model.architecture)))?,
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_7a1d);
    let val_patches: Vec<PatchRef> = val
        .iter()
        .enumerate()
        .filter(|(_, e)| e.n_frames() >= cfg.patch_frames)
        .flat_map(|(file, e)| {
            patch_offsets(e.n_frames(), cfg.patch_frames, cfg.val_patches_per_file, &mut val_rng)
                .into_iter()
                .map(move |offset| PatchRef { file, offset })
        })
        .collect();
    if val_patches.is_empty() {
        return Err(Error::Training(format!("no validation file has {} frames", cfg.patch_frames)));
    }
    let frames: Vec<usize> = train.iter().map(TrainExample::n_frames).collect();

    let mut opt = Adam::new(cfg.learning_rate);
    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let plan = sample_patches(&frames, cfg.patch_frames, cfg.patches_per_file, &mut rng);
        if plan.is_empty() {
            return Err(Error::Training(format!("no training file has {} frames", cfg.patch_frames)));
        }
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for (batch, chunk) in plan.chunks(cfg.batch_size).enumerate() {
            let (input, target) = assemble_batch(model, train, chunk, cfg.patch_frames)?;
            let trace = model.forward_train(&input)?;
            let (loss, dlogits) = bce_with_sigmoid_grad(&target.data, &trace.output().data);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch + 1 });
            }
            let grads = model.backward(&trace, &Tensor::from_vec(target.shape, dlogits));
            drop(trace);
            let g = grads.tensors();
            if g.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteLoss { epoch, batch: batch + 1 });
            }
            opt.step(model.param_tensors_mut(), &g);
            loss_sum += loss;
            n_batches += 1;
        }
        let val_loss = validation_loss(model, val, &val_patches, cfg)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n_batches as f64,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {:.5} ({:.1}s)",
            record.train_loss,
            record.val_loss,
            record.seconds
        );
        on_epoch(&record);
        epochs.push(record);
        if stopper.observe(epoch, val_loss) {
            best = model.clone();
        } else if stopper.should_stop() {
            stopped_early = true;
            break;
        }
    }
    let threshold = model.threshold;
    let fingerprint = model.training_fingerprint.clone();
    *model = best;
    model.threshold = threshold;
    model.training_fingerprint = fingerprint;
    Ok(TrainHistory {
        epochs,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best,
        stopped_early,
    })
}

pub fn train(model: &mut SalienceModel, train: &[TrainExample], val: &[TrainExample], cfg: &TrainConfig) -> Result<TrainHistory> {
    train_with(model, train, val, cfg, |_| {})
}
