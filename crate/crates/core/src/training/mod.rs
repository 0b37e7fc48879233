//! Epoch loops for the autoencoder and the variational autoencoder,
//! two-group Adam, gradient clipping, loss logs and checkpoints.

mod checkpoint;
mod optim;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{batch_indices, ImageBatch, Sample};
use crate::error::{Error, Result};
use crate::losses::{self, schedule_weights, LossSchedule};
use crate::models::{gaussian_noise, Model, ModelConfig};
use crate::neural::{ops, Mode, Module, Tape};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use optim::{adam_update, clip_global_norm, clip_module_grads, AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Reconstruction {
    /// Binary cross-entropy on logits.
    #[default]
    Bce,
    /// Squared error on sigmoid outputs.
    Mse,
}

/// Loop settings that are not part of the architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: u32,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Global L2 gradient-norm threshold.
    pub grad_clip: f64,
    pub shuffle: bool,
    pub reconstruction: Reconstruction,
    /// Record elapsed seconds in the loss log. Off by default so that
    /// identical seeded runs produce identical logs.
    pub log_wall_time: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self::standard_vae()
    }
}

impl TrainSettings {
    pub fn standard_vae() -> Self {
        Self {
            epochs: 45,
            batch_size: 32,
            adam: AdamConfig { lr_classical: 0.002, lr_quantum: 0.0002, ..AdamConfig::default() },
            grad_clip: 1.0,
            shuffle: true,
            reconstruction: Reconstruction::Bce,
            log_wall_time: false,
        }
    }

    pub fn standard_ae() -> Self {
        Self {
            epochs: 25,
            adam: AdamConfig { lr_quantum: 0.0005, ..Self::standard_vae().adam },
            ..Self::standard_vae()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if !(self.grad_clip > 0.0) {
            return Err(Error::Config("grad_clip must be positive".into()));
        }
        Ok(())
    }
}

/// Independent seeds for initialization, shuffling and latent noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub init: u64,
    pub shuffle: u64,
    pub noise: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self::from_master(0)
    }
}

impl Seeds {
    pub fn from_master(seed: u64) -> Self {
        Self { init: seed, shuffle: seed.wrapping_add(1), noise: seed.wrapping_add(2) }
    }
}

/// Seed for the stream belonging to `epoch`, so any epoch can be replayed
/// without running the ones before it.
pub fn epoch_seed(base: u64, epoch: u32) -> u64 {
    base ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Epoch means of the logged losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: u32,
    pub rec_loss: f64,
    pub kl_loss: f64,
    pub total_loss: f64,
    pub beta_t: f64,
    pub c_t: f64,
    pub seconds: f64,
}

pub const CSV_HEADER: &str = "epoch,rec_loss,kl_loss,total_loss,beta_t,C_t,seconds";

pub fn records_to_csv(records: &[TrainRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.epoch, r.rec_loss, r.kl_loss, r.total_loss, r.beta_t, r.c_t, r.seconds
        );
    }
    s
}

pub fn write_loss_csv(path: &Path, records: &[TrainRecord]) -> Result<()> {
    std::fs::write(path, records_to_csv(records))?;
    Ok(())
}

/// Batch losses from one optimization step.
#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub rec: f64,
    pub kl: f64,
    pub total: f64,
    pub grad_norm: f64,
}

/// Model, optimizer state and loop position.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub adam: AdamState,
    pub settings: TrainSettings,
    pub schedule: LossSchedule,
    pub seeds: Seeds,
    /// Completed epochs.
    pub epoch: u32,
    pub records: Vec<TrainRecord>,
}

impl Trainer {
    pub fn new(config: ModelConfig, settings: TrainSettings, schedule: LossSchedule, seeds: Seeds) -> Result<Self> {
        settings.validate()?;
        schedule.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds.init);
        let model = Model::new(config, &mut rng)?;
        Ok(Self {
            model,
            adam: AdamState::default(),
            settings,
            schedule,
            seeds,
            epoch: 0,
            records: Vec::new(),
        })
    }

    /// Forward, loss, backward, clip and Adam on one batch.
    pub fn step<R: rand::Rng + ?Sized>(
        &mut self,
        batch: &ImageBatch,
        beta_t: f64,
        c_t: f64,
        noise: &mut R,
    ) -> Result<StepLosses> {
        let n = batch.len();
        let eps = self
            .model
            .is_variational()
            .then(|| gaussian_noise(noise, n * self.model.config.latent_dim));
        let mut tape = Tape::new();
        let f = self.model.forward(&mut tape, &batch.pixels, Mode::Train, eps.as_deref())?;
        let target = batch.target();
        let rec = match self.settings.reconstruction {
            Reconstruction::Bce => losses::bce_with_logits_var(&mut tape, f.logits, &target)?,
            Reconstruction::Mse => {
                let p = ops::sigmoid(&mut tape, f.logits);
                losses::mse_loss_var(&mut tape, p, &target)?
            }
        };
        let (kl, total) = match (f.mu, f.logvar) {
            (Some(mu), Some(lv)) => {
                let kl = losses::kl_divergence_var(&mut tape, mu, lv, self.schedule.free_bits)?;
                let total = losses::total_loss_var(&mut tape, rec, kl, beta_t, c_t, &self.schedule)?;
                (tape.value(kl)[0], total)
            }
            _ => (0.0, rec),
        };
        let total_v = tape.value(total)[0];
        if !total_v.is_finite() {
            return Err(Error::NonFinite(format!("loss {total_v} at epoch {}", self.epoch + 1)));
        }
        tape.backward(total)?;
        self.model.zero_grad();
        self.model.collect_grads(&tape);
        let grad_norm = clip_module_grads(&mut self.model, self.settings.grad_clip);
        self.adam.step(&mut self.model, &self.settings.adam)?;
        Ok(StepLosses { rec: tape.value(rec)[0], kl, total: total_v, grad_norm })
    }

    /// Runs the next epoch over `samples` and appends its record.
    pub fn train_epoch(&mut self, samples: &[Sample]) -> Result<TrainRecord> {
        let start = Instant::now();
        let epoch = self.epoch + 1;
        let (beta_t, c_t) = schedule_weights(epoch, &self.schedule);
        let order_seed = self.settings.shuffle.then(|| epoch_seed(self.seeds.shuffle, epoch));
        let groups = batch_indices(samples.len(), self.settings.batch_size, order_seed)?;
        if groups.is_empty() {
            return Err(Error::Data(format!("{} samples cannot form a batch", samples.len())));
        }
        let mut noise = ChaCha8Rng::seed_from_u64(epoch_seed(self.seeds.noise, epoch));
        let (mut rec, mut kl, mut total, mut count) = (0.0, 0.0, 0.0, 0usize);
        for (b, idx) in groups.iter().enumerate() {
            let batch = ImageBatch::from_samples(idx.iter().map(|&i| &samples[i]));
            let l = self.step(&batch, beta_t, c_t, &mut noise).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("{m}, batch {}", b + 1)),
                other => other,
            })?;
            let w = batch.len() as f64;
            rec += l.rec * w;
            kl += l.kl * w;
            total += l.total * w;
            count += batch.len();
        }
        let c = count as f64;
        let record = TrainRecord {
            epoch,
            rec_loss: rec / c,
            kl_loss: kl / c,
            total_loss: total / c,
            beta_t,
            c_t,
            seconds: if self.settings.log_wall_time { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        self.epoch = epoch;
        self.records.push(record.clone());
        Ok(record)
    }

    /// Trains until `settings.epochs` epochs are complete, calling
    /// `on_epoch` after each one.
    pub fn run(
        &mut self,
        samples: &[Sample],
        mut on_epoch: impl FnMut(&Trainer, &TrainRecord) -> Result<()>,
    ) -> Result<()> {
        while self.epoch < self.settings.epochs {
            let r = self.train_epoch(samples)?;
            on_epoch(self, &r)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(self)
    }
}

/// Autoencoder training with pixel-sum BCE.
pub fn train_ae(
    config: ModelConfig,
    settings: TrainSettings,
    samples: &[Sample],
    seeds: Seeds,
) -> Result<(Model, Vec<TrainRecord>)> {
    if config.variational {
        return Err(Error::Config("train_ae needs a non-variational model".into()));
    }
    let mut t = Trainer::new(config, settings, LossSchedule::default(), seeds)?;
    t.run(samples, |_, _| Ok(()))?;
    Ok((t.model, t.records))
}

/// Variational training with β warm-up or capacity control.
pub fn train_vae(
    config: ModelConfig,
    settings: TrainSettings,
    schedule: LossSchedule,
    samples: &[Sample],
    seeds: Seeds,
) -> Result<(Model, Vec<TrainRecord>)> {
    if !config.variational {
        return Err(Error::Config("train_vae needs a variational model".into()));
    }
    let mut t = Trainer::new(config, settings, schedule, seeds)?;
    t.run(samples, |_, _| Ok(()))?;
    Ok((t.model, t.records))
}

#[cfg(test)]
mod tests;
