//! Transformer-encoder sequence classifier with hand-written forward and
//! backward passes in 64-bit floating point.
//!
//! The architecture is BERT-shaped: token plus learned position embeddings,
//! a stack of encoder layers (masked multi-head self-attention and a GELU
//! feed-forward block, each with residual connection and layer norm), and a
//! linear classifier head reading the hidden state at the leading `[CLS]`
//! position. PAD positions receive negative-infinity attention logits, so
//! padded tails never influence the logits.

mod backward;
mod forward;
mod io;
mod params;

pub use backward::{evaluate_loss, loss_and_grad, predict};
pub use forward::{forward, ForwardTrace};
pub use io::{load_params, read_header, save_params};
pub use params::{
    EncoderLayerParams, LayerNormParams, LinearParams, ModelParams, ParamView, ParamViewMut,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch in {dimension}: expected {expected}, got {actual}")]
    ShapeMismatch {
        dimension: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("token id {id} is out of range for vocabulary of size {vocab_size}")]
    TokenIdOutOfRange { id: u32, vocab_size: usize },
    #[error("label index {label} is out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("checkpoint is malformed: {0}")]
    CheckpointFormat(String),
    #[error("checkpoint config mismatch in {field}: expected {expected}, got {actual}")]
    ConfigMismatch {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shape of the classifier: layer count, widths, sequence length, and the
/// data-dependent vocabulary/class sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub hidden: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
}

impl ModelConfig {
    /// Small configuration that trains in minutes on a laptop CPU.
    pub fn desk_scale(vocab_size: usize, n_classes: usize, max_len: usize) -> Self {
        Self {
            n_layers: 2,
            hidden: 128,
            n_heads: 4,
            ff_dim: 256,
            max_len,
            vocab_size,
            n_classes,
            dropout_rate: 0.1,
        }
    }

    /// BERT-base shape: 12 layers, 768 hidden units, 12 heads, 3072
    /// feed-forward, 128-token sequences.
    pub fn paper_scale(vocab_size: usize, n_classes: usize) -> Self {
        Self {
            n_layers: 12,
            hidden: 768,
            n_heads: 12,
            ff_dim: 3072,
            max_len: 128,
            vocab_size,
            n_classes,
            dropout_rate: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("n_layers", self.n_layers),
            ("hidden", self.hidden),
            ("n_heads", self.n_heads),
            ("ff_dim", self.ff_dim),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.n_classes < 2 {
            return Err(ModelError::InvalidConfig(
                "n_classes must be >= 2".to_owned(),
            ));
        }
        if self.hidden % self.n_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "hidden ({}) must be divisible by n_heads ({})",
                self.hidden, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.n_heads
    }

    /// Errors on the first structural field that differs.
    pub fn ensure_matches(&self, other: &ModelConfig) -> Result<(), ModelError> {
        let fields = [
            ("n_layers", self.n_layers, other.n_layers),
            ("hidden", self.hidden, other.hidden),
            ("n_heads", self.n_heads, other.n_heads),
            ("ff_dim", self.ff_dim, other.ff_dim),
            ("max_len", self.max_len, other.max_len),
            ("vocab_size", self.vocab_size, other.vocab_size),
            ("n_classes", self.n_classes, other.n_classes),
        ];
        for (field, expected, actual) in fields {
            if expected != actual {
                return Err(ModelError::ConfigMismatch {
                    field,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }
}
