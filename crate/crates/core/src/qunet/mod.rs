//! Quantile-regression U-net: layers, pinball loss, Adam, training loop and
//! checkpoints.

mod adam;
mod checkpoint;
mod layers;
mod loss;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::swath::{quantile_level, N_QUANTILES};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use layers::Real;
pub use loss::{pinball_grad, pinball_loss};
pub use model::{Activation, ConvSpec, ModelConfig, QuantileUNet, Tape};
pub use train::{mean_loss, predict_scene, train, EpochRecord, Sample, TrainConfig, Trainer};

/// Strictly increasing quantile levels in (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileLevels(Vec<f64>);

impl QuantileLevels {
    /// 0.01, 0.02, ..., 0.99
    pub fn standard() -> Self {
        QuantileLevels((0..N_QUANTILES).map(quantile_level).collect())
    }

    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty()
            || levels.iter().any(|q| !(*q > 0.0 && *q < 1.0))
            || levels.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::invalid("quantile levels", "must be strictly increasing in (0, 1)"));
        }
        Ok(QuantileLevels(levels))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
