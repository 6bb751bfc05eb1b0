//! Mini-batch training with Adam on whole tiles.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::pinball_accumulate;
use super::model::{ModelConfig, QuantileUNet};
use super::QuantileLevels;
use crate::dataset::Normalizer;
use crate::error::{Error, Result};
use crate::swath::{QuantileField, RainField, SwathData, TbScene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// shuffling seed
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        TrainConfig {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            epochs: 50,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate", format!("{} must be > 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::invalid("adam", "betas must be in [0, 1) and eps > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// One standardized input tile and its reference rain (NaN = missing).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub h: usize,
    pub w: usize,
    /// `in_channels x h x w`
    pub input: Vec<f32>,
    /// `h x w`
    pub target: Vec<f32>,
}

impl Sample {
    pub fn from_scene(tb: &TbScene, reference: &RainField, normalizer: &Normalizer) -> Result<Self> {
        if tb.shape() != reference.shape() {
            return Err(Error::DimensionMismatch(format!(
                "TB {:?} vs reference {:?}",
                tb.shape(),
                reference.shape()
            )));
        }
        let (h, w) = tb.shape();
        Ok(Sample {
            h,
            w,
            input: normalizer.apply(tb),
            target: reference.values().to_vec(),
        })
    }

    fn n_valid(&self) -> usize {
        self.target.iter().filter(|v| !v.is_nan()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based
    pub epoch: usize,
    pub train_loss: f64,
    /// None without a validation split
    pub val_loss: Option<f64>,
}

/// Pixel-weighted pinball loss of the model over `samples`; None when no
/// sample has a valid pixel.
pub fn mean_loss(model: &QuantileUNet<f32>, samples: &[Sample], levels: &QuantileLevels) -> Result<Option<f64>> {
    let n: usize = samples.iter().map(Sample::n_valid).sum();
    if n == 0 {
        return Ok(None);
    }
    let mut total = 0.0;
    for s in samples {
        let out = model.forward(&s.input, s.h, s.w)?;
        total += pinball_accumulate(&out, &s.target, levels, n as f64, None);
    }
    Ok(Some(total))
}

/// Training state that can be checkpointed and resumed at epoch boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub model: QuantileUNet<f32>,
    pub adam: AdamState<f32>,
    pub history: Vec<EpochRecord>,
    pub config: TrainConfig,
    levels: QuantileLevels,
}

impl Trainer {
    pub fn new(model: QuantileUNet<f32>, config: TrainConfig) -> Result<Self> {
        let n = model.n_params();
        Self::resume(model, AdamState::new(n), Vec::new(), config)
    }

    pub fn resume(model: QuantileUNet<f32>, adam: AdamState<f32>, history: Vec<EpochRecord>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if adam.m.len() != model.n_params() || adam.v.len() != model.n_params() {
            return Err(Error::Checkpoint("optimizer state does not match the model".into()));
        }
        Ok(Trainer { model, adam, history, config, levels: QuantileLevels::standard() })
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    /// Train until `config.epochs` epochs are recorded, calling `on_epoch`
    /// after each one. Aborts on a non-finite loss.
    pub fn run(
        &mut self,
        train: &[Sample],
        val: &[Sample],
        mut on_epoch: impl FnMut(&Trainer, &EpochRecord) -> Result<()>,
    ) -> Result<()> {
        if self.epochs_done() >= self.config.epochs {
            return Ok(());
        }
        if train.is_empty() {
            return Err(Error::Empty("training split"));
        }
        let adam_cfg = self.config.adam();
        let mut grads = vec![0f32; self.model.n_params()];
        let n_valid: Vec<usize> = train.iter().map(Sample::n_valid).collect();
        for epoch in self.epochs_done() + 1..=self.config.epochs {
            let mut order: Vec<usize> = (0..train.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(epoch as u64);
            order.shuffle(&mut rng);
            let (mut sum, mut count) = (0.0, 0usize);
            for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
                let n: usize = batch.iter().map(|&i| n_valid[i]).sum();
                if n == 0 {
                    continue;
                }
                grads.fill(0.0);
                let mut loss = 0.0;
                for &i in batch {
                    let s = &train[i];
                    let tape = self.model.forward_train(&s.input, s.h, s.w)?;
                    let mut d = vec![0f32; tape.output().len()];
                    loss += pinball_accumulate(tape.output(), &s.target, &self.levels, n as f64, Some(&mut d));
                    self.model.backward(&tape, d, &mut grads)?;
                }
                if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        detail: format!("batch {b} loss {loss}; lower the learning rate or check the inputs"),
                    });
                }
                adam_step(self.model.params_mut(), &grads, &mut self.adam, &adam_cfg);
                sum += loss * n as f64;
                count += n;
            }
            if count == 0 {
                return Err(Error::Empty("valid target pixels in the training split"));
            }
            let val_loss = mean_loss(&self.model, val, &self.levels)?;
            if val_loss.is_some_and(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, detail: "validation loss".into() });
            }
            let rec = EpochRecord { epoch, train_loss: sum / count as f64, val_loss };
            self.history.push(rec);
            on_epoch(self, &rec)?;
        }
        Ok(())
    }
}

/// Initialize from `model_cfg` and train for `train_cfg.epochs` epochs.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
) -> Result<(QuantileUNet<f32>, Vec<EpochRecord>)> {
    let mut t = Trainer::new(QuantileUNet::new(model_cfg.clone())?, train_cfg.clone())?;
    t.run(train, val, |_, _| Ok(()))?;
    Ok((t.model, t.history))
}

/// Raw 99-quantile output for one TB scene (dims must already be tile-conformant).
pub fn predict_scene(model: &QuantileUNet<f32>, normalizer: &Normalizer, tb: &TbScene) -> Result<QuantileField> {
    let (h, w) = tb.shape();
    let out = model.forward(&normalizer.apply(tb), h, w)?;
    QuantileField::new(tb.geo().clone(), out)
}
