//! Mini-batch training with MSE loss.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, Error, Result};
use crate::grid::{Dataset, SamplePair, Split, Transform};
use crate::kv::{KeyValues, KvReader};
use crate::metrics::mse;
use crate::optim::{Optimizer, OptimizerConfig};

use super::model::{stack_frames, Forecaster};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Halve the learning rate after `patience` epochs without validation improvement.
    HalveOnPlateau { patience: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Shuffling and augmentation seed.
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    /// Rescale gradients whose global norm exceeds this value.
    pub grad_clip: Option<f64>,
    /// Apply a random mirror/rotation to every training sample.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            seed: 0,
            optimizer: OptimizerConfig::adabelief(),
            schedule: LrSchedule::Constant,
            grad_clip: None,
            augment: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(config_err!("train.epochs and train.batch_size must be positive"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(config_err!("train.grad_clip must be positive"));
            }
        }
        if let LrSchedule::HalveOnPlateau { patience: 0 } = self.schedule {
            return Err(config_err!("train.patience must be positive"));
        }
        self.optimizer.validate()
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        kv.set("train.epochs", self.epochs);
        kv.set("train.batch_size", self.batch_size);
        kv.set("train.seed", self.seed);
        match self.schedule {
            LrSchedule::Constant => kv.set("train.lr_schedule", "constant"),
            LrSchedule::HalveOnPlateau { patience } => {
                kv.set("train.lr_schedule", "plateau");
                kv.set("train.patience", patience);
            }
        }
        if let Some(c) = self.grad_clip {
            kv.set("train.grad_clip", c);
        }
        kv.set("train.augment", self.augment);
        self.optimizer.write_kv(kv);
    }

    pub fn read_kv(r: &mut KvReader<'_>) -> Result<Self> {
        let d = TrainConfig::default();
        let schedule = match r.or("train.lr_schedule", "constant".to_string())?.as_str() {
            "constant" => LrSchedule::Constant,
            "plateau" => LrSchedule::HalveOnPlateau {
                patience: r.or("train.patience", 3)?,
            },
            other => return Err(config_err!("unknown train.lr_schedule {other:?}")),
        };
        let cfg = TrainConfig {
            epochs: r.or("train.epochs", d.epochs)?,
            batch_size: r.or("train.batch_size", d.batch_size)?,
            seed: r.or("train.seed", d.seed)?,
            schedule,
            grad_clip: r.opt("train.grad_clip")?,
            augment: r.or("train.augment", d.augment)?,
            optimizer: OptimizerConfig::read_kv(r)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Pre-step loss of every optimizer step.
    pub step_losses: Vec<f64>,
    pub samples: usize,
}

impl TrainLog {
    pub fn to_text(&self) -> String {
        let mut s = String::from("epoch train_loss val_loss lr\n");
        for e in &self.epochs {
            let val = e.val_loss.map_or("-".to_string(), |v| format!("{v:.9e}"));
            s.push_str(&format!("{} {:.9e} {} {:e}\n", e.epoch, e.train_loss, val, e.lr));
        }
        s
    }
}

/// One optimizer step on `batch`; returns the loss before the update.
pub fn train_step(
    model: &mut Forecaster<f32>,
    batch: &[&SamplePair],
    opt: &mut Optimizer<f32>,
    grad_clip: Option<f64>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(config_err!("empty batch"));
    }
    let spec = model.spec().clone();
    let inputs: Vec<_> = batch.iter().map(|s| &s.input).collect();
    let targets: Vec<_> = batch.iter().map(|s| &s.target).collect();
    let x = stack_frames::<f32>(&inputs, &spec, spec.t_in, spec.in_channels)?;
    let y = stack_frames::<f32>(&targets, &spec, spec.t_out, spec.out_channels)?;
    model.params_mut().zero_grad();
    let loss = model.loss_and_backward(&x, &y)?;
    if let Some(clip) = grad_clip {
        let norm = model.params().grad_norm();
        if norm > clip {
            model.params_mut().scale_grads((clip / norm) as f32);
        }
    }
    opt.step(model.params_mut())
        .map_err(|e| Error::Numeric(format!("loss {loss}: {e}")))?;
    Ok(loss)
}

/// Mean MSE of `model` over a split, `None` when the split is empty.
pub fn split_loss(model: &Forecaster<f32>, data: &Dataset, split: Split, batch_size: usize) -> Result<Option<f64>> {
    let samples: Vec<&SamplePair> = data.split(split).collect();
    if samples.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let inputs: Vec<_> = chunk.iter().map(|s| &s.input).collect();
        let preds = model.predict_batch(&inputs)?;
        for (p, s) in preds.iter().zip(chunk) {
            total += mse(p, &s.target, None)?;
        }
    }
    Ok(Some(total / samples.len() as f64))
}

fn random_transform(rng: &mut ChaCha8Rng, square: bool) -> Transform {
    let choices: &[Transform] = if square {
        &Transform::ALL
    } else {
        &[Transform::Identity, Transform::MirrorH, Transform::MirrorV, Transform::Rot180]
    };
    choices[rng.random_range(0..choices.len())]
}

/// Trains on the train split, tracking validation loss per epoch when a
/// validation split exists.
pub fn train(model: &mut Forecaster<f32>, data: &Dataset, cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    let train: Vec<&SamplePair> = data.split(Split::Train).collect();
    if train.is_empty() {
        return Err(config_err!("train split is empty"));
    }
    let square = model.spec().height == model.spec().width;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer.clone(), model.params())?;
    let mut log = TrainLog {
        samples: train.len(),
        ..TrainLog::default()
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let augmented: Vec<SamplePair>;
            let batch: Vec<&SamplePair> = if cfg.augment {
                augmented = idx
                    .iter()
                    .map(|&i| train[i].augment(random_transform(&mut rng, square)))
                    .collect::<Result<_>>()?;
                augmented.iter().collect()
            } else {
                idx.iter().map(|&i| train[i]).collect()
            };
            let loss = train_step(model, &batch, &mut opt, cfg.grad_clip)?;
            log.step_losses.push(loss);
            epoch_loss += loss;
            steps += 1;
        }
        let val_loss = split_loss(model, data, Split::Validation, cfg.batch_size)?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / steps as f64,
            val_loss,
            lr: opt.lr(),
        });
        if let (LrSchedule::HalveOnPlateau { patience }, Some(v)) = (cfg.schedule, val_loss) {
            if v < best_val {
                best_val = v;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    opt.set_lr(opt.lr() * 0.5);
                    stale = 0;
                }
            }
        }
    }
    Ok(log)
}
