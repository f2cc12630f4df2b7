//! Contextual encoder shared by the tagger and the fine classifier.
//!
//! The default implementation is a small transformer trained from scratch.
//! External pretrained encoders plug in through [`ContextEncoder`].

mod checkpoint;
mod head;
mod optim;
mod params;
mod tokenizer;
mod train;
mod transformer;

use thiserror::Error;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT};
pub use head::{CrossEntropy, Example, HeadNet, Target};
pub use optim::{Adam, AdamConfig};
pub use params::Parameters;
pub use tokenizer::{
    PieceSequence, Tokenizer, TokenizerConfig, CLS, CLS_ID, MASK, MASK_ID, SEP, SEP_ID, UNK,
    UNK_ID,
};
pub use train::{train_step, Objective};
pub use transformer::{Block, EncoderConfig, EncoderShape, EncoderOutput, EncoderParams, ForwardCache, LayerNorm};


#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("token {0} is empty")]
    EmptyToken(usize),
    #[error("empty piece sequence")]
    EmptySequence,
    #[error("sequence of {len} pieces exceeds the maximum of {max}")]
    TooLong { len: usize, max: usize },
    #[error("piece id {0} is outside the vocabulary")]
    UnknownPiece(u32),
    #[error("invalid encoder configuration: {0}")]
    Config(String),
    #[error("training diverged: loss is {0}")]
    Divergence(f64),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// A trained tokenizer and encoder used to initialize another model.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedEncoder {
    pub tokenizer: Tokenizer,
    pub params: EncoderParams,
}

impl PretrainedEncoder {
    pub fn new(tokenizer: Tokenizer, params: EncoderParams) -> Result<Self, EncoderError> {
        if tokenizer.vocab_size() != params.config.vocab_size {
            return Err(EncoderError::Config(format!(
                "tokenizer has {} pieces but the encoder expects {}",
                tokenizer.vocab_size(),
                params.config.vocab_size
            )));
        }
        Ok(PretrainedEncoder { tokenizer, params })
    }

    pub fn shape(&self) -> EncoderShape {
        let c = &self.params.config;
        EncoderShape {
            d_model: c.d_model,
            heads: c.heads,
            ffn: c.ffn,
            layers: c.layers,
            max_len: c.max_len,
        }
    }

    /// True when every symbol is an atomic reserved piece.
    pub fn reserves(&self, symbols: &[String]) -> bool {
        symbols.iter().all(|s| self.tokenizer.reserved().contains(s))
    }
}

/// Seam for encoders other than the built-in transformer.
///
/// Implementations map a framed piece sequence to one vector per piece, with
/// the pooled vector taken at the sequence-start position.
pub trait ContextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn max_len(&self) -> usize;
    fn encode(&self, seq: &PieceSequence) -> Result<EncoderOutput, EncoderError>;
}

impl ContextEncoder for EncoderParams {
    fn dim(&self) -> usize {
        self.config.d_model
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn encode(&self, seq: &PieceSequence) -> Result<EncoderOutput, EncoderError> {
        EncoderParams::encode(self, seq)
    }
}
