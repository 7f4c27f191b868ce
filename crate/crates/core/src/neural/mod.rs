//! Desk-scale transformer encoder for four-way text classification, with a
//! domain classifier attached through a gradient-reversal layer.
//!
//! All arithmetic is f64; parameters are kept on the f32 grid (see
//! [`ClassifierModel::quantize`]) so that the model file, which stores
//! little-endian f32, round-trips bit-exactly.

mod io;
mod model;
pub mod ops;
mod vocab;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_model, save_model, FORMAT_VERSION, MAGIC};
pub use model::{ClassifierModel, ForwardOutput, Gradients, LossBreakdown, ParamLayout, Target, TensorSpec};
pub use vocab::{tokenize, Vocabulary, DEFAULT_MAX_VOCAB, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use crate::corpus::Label;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("target out of range: {0}")]
    TargetOutOfRange(String),
    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u8, expected: u8 },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embedding_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub feedforward_dim: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embedding_dim: 128,
            num_layers: 2,
            num_heads: 4,
            feedforward_dim: 256,
            max_seq_len: 512,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.embedding_dim == 0 || self.num_heads == 0 || self.feedforward_dim == 0 {
            return Err(NeuralError::Config("dimensions must be positive".into()));
        }
        if self.embedding_dim % self.num_heads != 0 {
            return Err(NeuralError::Config(format!(
                "embedding_dim {} not divisible by num_heads {}",
                self.embedding_dim, self.num_heads
            )));
        }
        if self.max_seq_len == 0 {
            return Err(NeuralError::Config("max_seq_len must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NeuralError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<u32>,
    /// More tokens were present than `max_seq_len`.
    pub truncated: bool,
}

/// Lowercased word tokens mapped through the vocabulary, truncated to
/// `config.max_seq_len`.
pub fn encode(text: &str, vocab: &Vocabulary, config: &EncoderConfig) -> Encoded {
    let mut ids: Vec<u32> = tokenize(text).map(|t| vocab.get(&t)).collect();
    let truncated = ids.len() > config.max_seq_len;
    ids.truncate(config.max_seq_len);
    Encoded { ids, truncated }
}

/// Right-pads every sequence with PAD to the longest one in the batch.
pub fn pad_batch(seqs: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let width = seqs.iter().map(Vec::len).max().unwrap_or(0);
    seqs.iter()
        .map(|s| {
            let mut p = s.clone();
            p.resize(width, PAD);
            p
        })
        .collect()
}

/// Lowest index of the maximum; ties go to the lowest class code.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy of each head over the batch, summed. The reversal
/// coefficient does not enter the forward value.
pub fn loss(
    label_logits: ArrayView2<f64>,
    domain_logits: ArrayView2<f64>,
    label_targets: &[Label],
    domain_targets: &[usize],
) -> Result<f64, NeuralError> {
    let b = label_logits.nrows();
    if label_targets.len() != b || domain_targets.len() != domain_logits.nrows() {
        return Err(NeuralError::Dimension("targets do not match logits".into()));
    }
    let mut label_ce = 0.0;
    for (row, t) in label_logits.rows().into_iter().zip(label_targets) {
        label_ce -= ops::log_softmax(&row)[t.code()];
    }
    let mut domain_ce = 0.0;
    for (row, &t) in domain_logits.rows().into_iter().zip(domain_targets) {
        if t >= row.len() {
            return Err(NeuralError::TargetOutOfRange(format!("domain {t} with {} logits", row.len())));
        }
        domain_ce -= ops::log_softmax(&row)[t];
    }
    let label_mean = if b == 0 { 0.0 } else { label_ce / b as f64 };
    let db = domain_logits.nrows();
    let domain_mean = if db == 0 { 0.0 } else { domain_ce / db as f64 };
    Ok(label_mean + domain_mean)
}

/// Gradient reversal: identity forward, `-lambda * g` backward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReversal {
    pub lambda: f64,
}

impl GradientReversal {
    pub fn forward<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        x
    }

    pub fn backward(&self, upstream: &[f64]) -> Vec<f64> {
        grl_backward(upstream, self.lambda)
    }
}

pub fn grl_backward(upstream: &[f64], lambda: f64) -> Vec<f64> {
    debug_assert!(lambda >= 0.0, "reversal coefficient must be non-negative");
    upstream.iter().map(|g| -lambda * g).collect()
}

#[cfg(test)]
mod tests;
