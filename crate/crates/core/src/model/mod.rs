//! The hierarchical ring/atom transformer: atom message passing, edge-aware
//! ring attention, atom/ring exchange, fusion and a dual-pooling readout.

mod batch;
mod check;
mod layers;
mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::smiles::{ATOM_FEATURE_DIM, BOND_FEATURE_DIM};
use crate::tensor::TensorError;

pub use batch::{collate, BatchedGraph};
pub use check::{grad_check_config, model_grad_check, GRAD_CHECK_SMILES};
pub use layers::{
    atom_mp_layer, forward, fuse, init_embeddings, inter_mp_layer, mae_loss, ring_attention_layer, Bound, ForwardOutput,
};
pub use params::ModelParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("{what} width {found} does not match the model's {expected}")]
    VocabMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite target value")]
    NonFiniteTarget,
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
}

/// How attention scores become weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttnNorm {
    /// Softmax of the scaled scores over each neighbourhood.
    #[default]
    Softmax,
    /// Scaled scores divided by their neighbourhood sum.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Width of the degree encoding appended to ring embeddings.
    pub pe_dim: usize,
    /// Larger ring degrees share the last encoding row.
    pub max_degree: usize,
    pub attn_norm: AttnNorm,
    pub use_virtual: bool,
    pub n_targets: usize,
    pub atom_dim: usize,
    pub bond_dim: usize,
    /// Ring-type one-hot width, OOV included.
    pub ring_dim: usize,
    /// Connection-type one-hot width, OOV and virtual included.
    pub conn_dim: usize,
}

impl ModelConfig {
    /// Small profile for a single CPU: L=4, d=128, C=4, d_p=16.
    pub fn desk(n_targets: usize) -> ModelConfig {
        ModelConfig {
            layers: 4,
            hidden: 128,
            heads: 4,
            pe_dim: 16,
            max_degree: 16,
            attn_norm: AttnNorm::Softmax,
            use_virtual: true,
            n_targets,
            atom_dim: ATOM_FEATURE_DIM,
            bond_dim: BOND_FEATURE_DIM,
            ring_dim: 1,
            conn_dim: 2,
        }
    }

    /// Full-size profile: L=8, d=512, C=4, d_p=32.
    pub fn paper(n_targets: usize) -> ModelConfig {
        ModelConfig {
            layers: 8,
            hidden: 512,
            pe_dim: 32,
            ..ModelConfig::desk(n_targets)
        }
    }

    pub fn profile(name: &str, n_targets: usize) -> Option<ModelConfig> {
        match name {
            "desk" => Some(ModelConfig::desk(n_targets)),
            "paper" => Some(ModelConfig::paper(n_targets)),
            _ => None,
        }
    }

    /// Sets the ring and connection one-hot widths from a vocabulary.
    pub fn with_vocab(mut self, vocab: &crate::hiergraph::Vocabulary) -> ModelConfig {
        self.ring_dim = vocab.ring_dim();
        self.conn_dim = vocab.connection_dim();
        self
    }

    pub fn readout_dim(&self) -> usize {
        2 * self.hidden * (self.layers + 1)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.layers == 0 {
            return bad("layers must be at least 1".into());
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("hidden {} is not divisible by heads {}", self.hidden, self.heads));
        }
        if self.pe_dim >= self.hidden {
            return bad(format!("pe_dim {} must be below hidden {}", self.pe_dim, self.hidden));
        }
        if self.n_targets == 0 {
            return bad("n_targets must be at least 1".into());
        }
        if self.ring_dim == 0 || self.conn_dim < 2 {
            return bad("ring_dim must be >= 1 and conn_dim >= 2".into());
        }
        Ok(())
    }
}
