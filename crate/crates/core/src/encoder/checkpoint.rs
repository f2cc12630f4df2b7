//! Self-describing checkpoint container.
//!
//! A checkpoint is one JSON document holding a versioned format id, the model
//! kind, encoder hyperparameters, the tokenizer vocabulary, every parameter
//! tensor by name, and model-specific metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::Parameters;
use super::tokenizer::Tokenizer;
use super::transformer::EncoderConfig;
use super::EncoderError;

pub const CHECKPOINT_FORMAT: &str = "cascade-ner.checkpoint.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub kind: String,
    pub encoder: EncoderConfig,
    pub tokenizer: Tokenizer,
    pub tensors: Vec<NamedTensor>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn capture<P: Parameters>(
        kind: &str,
        encoder: &EncoderConfig,
        tokenizer: &Tokenizer,
        net: &P,
        meta: serde_json::Value,
    ) -> Self {
        let tensors = net
            .named_tensors()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                shape: [t.nrows(), t.ncols()],
                data: t.iter().copied().collect(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            kind: kind.to_string(),
            encoder: encoder.clone(),
            tokenizer: tokenizer.clone(),
            tensors,
            meta,
        }
    }

    /// Copies stored tensors into `net`, which must have the same layout.
    pub fn restore_into<P: Parameters>(&self, net: &mut P) -> Result<(), EncoderError> {
        let names: Vec<String> = net.named_tensors().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.tensors.len() {
            return Err(EncoderError::Checkpoint(format!(
                "expected {} tensors, checkpoint has {}",
                names.len(),
                self.tensors.len()
            )));
        }
        for ((slot, name), stored) in net.tensors_mut().into_iter().zip(&names).zip(&self.tensors) {
            if *name != stored.name || [slot.nrows(), slot.ncols()] != stored.shape {
                return Err(EncoderError::Checkpoint(format!(
                    "tensor {name} {:?} does not match stored {} {:?}",
                    slot.shape(),
                    stored.name,
                    stored.shape
                )));
            }
            *slot = Array2::from_shape_vec((stored.shape[0], stored.shape[1]), stored.data.clone())
                .map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self).map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
        w.flush()?;
        Ok(())
    }

    /// Loads and checks the format id and, when given, the model kind.
    pub fn load(path: &Path, kind: Option<&str>) -> Result<Self, EncoderError> {
        let r = BufReader::new(File::open(path)?);
        let ckpt: Checkpoint =
            serde_json::from_reader(r).map_err(|e| EncoderError::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(EncoderError::Checkpoint(format!(
                "unsupported format {:?}, expected {CHECKPOINT_FORMAT:?}",
                ckpt.format
            )));
        }
        if let Some(k) = kind {
            if ckpt.kind != k {
                return Err(EncoderError::Checkpoint(format!(
                    "checkpoint holds a {:?} model, expected {k:?}",
                    ckpt.kind
                )));
            }
        }
        Ok(ckpt)
    }
}
