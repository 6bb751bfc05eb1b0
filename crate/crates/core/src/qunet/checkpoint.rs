//! QNT1 checkpoints: `"QNT1"`, u32 LE header length, JSON header, then the
//! f32 LE parameter blob in layer order (each layer: weights
//! `[cout][cin][k][k]`, then biases), then, when the header carries an
//! optimizer step count, the Adam first and second moments in the same layout.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::model::{ConvSpec, ModelConfig, QuantileUNet};
use super::train::{EpochRecord, TrainConfig, Trainer};
use crate::dataset::Normalizer;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"QNT1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: Option<TrainConfig>,
    seed: u64,
    n_params: usize,
    layers: Vec<ConvSpec>,
    normalizer: Option<Normalizer>,
    history: Vec<EpochRecord>,
    adam_step: Option<u64>,
}

/// A model plus what is needed to retrieve with it or keep training it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: QuantileUNet<f32>,
    pub train: Option<TrainConfig>,
    pub normalizer: Option<Normalizer>,
    pub history: Vec<EpochRecord>,
    pub adam: Option<AdamState<f32>>,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer, normalizer: Option<Normalizer>) -> Self {
        Checkpoint {
            model: t.model.clone(),
            train: Some(t.config.clone()),
            normalizer,
            history: t.history.clone(),
            adam: Some(t.adam.clone()),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.model.config().clone(),
            train: self.train.clone(),
            seed: self.model.config().seed,
            n_params: self.model.n_params(),
            layers: self.model.layers().to_vec(),
            normalizer: self.normalizer,
            history: self.history.clone(),
            adam_step: self.adam.as_ref().map(|a| a.t),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n = self.model.n_params();
        let mut out = Vec::with_capacity(8 + json.len() + 12 * n);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let mut blob = |v: &[f32]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        blob(self.model.params());
        if let Some(a) = &self.adam {
            blob(&a.m);
            blob(&a.v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("missing QNT1 magic"));
        }
        let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let n = header.n_params;
        let n_blobs = if header.adam_step.is_some() { 3 } else { 1 };
        let data = &bytes[8 + hlen..];
        if data.len() != 4 * n * n_blobs {
            return Err(Error::Checkpoint(format!(
                "expected {} bytes of parameters, found {}",
                4 * n * n_blobs,
                data.len()
            )));
        }
        let mut blobs = data
            .chunks_exact(4 * n.max(1))
            .map(|c| c.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect::<Vec<_>>());
        let model = QuantileUNet::from_params(header.model, blobs.next().unwrap_or_default())?;
        if model.layers() != header.layers.as_slice() {
            return Err(bad("layer table does not match the architecture"));
        }
        let adam = match header.adam_step {
            Some(t) => Some(AdamState {
                m: blobs.next().unwrap_or_default(),
                v: blobs.next().unwrap_or_default(),
                t,
            }),
            None => None,
        };
        Ok(Checkpoint {
            model,
            train: header.train,
            normalizer: header.normalizer,
            history: header.history,
            adam,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
