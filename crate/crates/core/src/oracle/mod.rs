//! The model seen from the engine: a function from a partially masked response
//! and a condition mode to per-position vocabulary logits.
//!
//! In-process toy oracles live in [`template`] and [`mixture`]; a remote model
//! server is reached through [`crate::remote::RemoteOracle`].

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{TokenId, TokenSequence};

pub mod mixture;
pub mod spec;
pub mod template;
mod wrappers;

pub use mixture::MixtureOracle;
pub use spec::OracleSpec;
pub use template::{AnswerBias, TemplateOracle};
pub use wrappers::{CountingOracle, LatencyOracle};

/// Logit given to the mask id by the toy oracles so it never wins an argmax.
pub const MASK_LOGIT: f64 = -1.0e4;

/// Tolerance on the total mass of a probability row.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("position {0} is not masked")]
    PositionNotMasked(usize),
    #[error("position {position} out of range for length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("invalid oracle configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid logit row at position {position}: {reason}")]
    InvalidRow { position: usize, reason: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

impl OracleError {
    /// True for failures of the remote channel rather than of the request.
    pub fn is_transport(&self) -> bool {
        matches!(self, Self::Transport(_) | Self::MalformedResponse(_))
    }
}

/// Whether the droppable condition segment (the image, for a multimodal
/// model) is part of the model input. The text prompt is always kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    Full,
    NoVisual,
}

impl ConditionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoVisual => "no_visual",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMetadata {
    pub vocab_size: usize,
    pub mask_token_id: TokenId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_to_token: Option<BTreeMap<TokenId, String>>,
}

impl OracleMetadata {
    pub fn new(vocab_size: usize, mask_token_id: TokenId) -> Result<Self, OracleError> {
        let meta = Self {
            vocab_size,
            mask_token_id,
            id_to_token: None,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn with_tokens(mut self, tokens: &[String]) -> Self {
        self.id_to_token = Some(
            tokens
                .iter()
                .enumerate()
                .map(|(id, s)| (id as TokenId, s.clone()))
                .collect(),
        );
        self
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.vocab_size == 0 {
            return Err(OracleError::InvalidConfig("vocab_size must be positive".into()));
        }
        if self.mask_token_id as usize >= self.vocab_size {
            return Err(OracleError::InvalidConfig(format!(
                "mask id {} not below vocab size {}",
                self.mask_token_id, self.vocab_size
            )));
        }
        Ok(())
    }

    /// Text for a token, or `<id>` when the oracle exposes no vocabulary map.
    pub fn render(&self, token: TokenId) -> String {
        self.id_to_token
            .as_ref()
            .and_then(|m| m.get(&token).cloned())
            .unwrap_or_else(|| format!("<{token}>"))
    }
}

/// Logits for one position: either a dense vector over the whole vocabulary
/// or a sparse top-k slice with an explicit bound on the mass left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRow {
    pub position: usize,
    /// Present for sparse rows: the ids the logits belong to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_ids: Option<Vec<TokenId>>,
    pub logits: Vec<f64>,
    /// Sparse rows only: probability mass outside `token_ids`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_mass: Option<f64>,
}

impl LogitRow {
    pub fn dense(position: usize, logits: Vec<f64>) -> Self {
        Self {
            position,
            token_ids: None,
            logits,
            tail_mass: None,
        }
    }

    pub fn sparse(position: usize, token_ids: Vec<TokenId>, logits: Vec<f64>, tail_mass: f64) -> Self {
        Self {
            position,
            token_ids: Some(token_ids),
            logits,
            tail_mass: Some(tail_mass),
        }
    }

    pub fn is_sparse(&self) -> bool {
        self.token_ids.is_some()
    }

    fn invalid(&self, reason: impl Into<String>) -> OracleError {
        OracleError::InvalidRow {
            position: self.position,
            reason: reason.into(),
        }
    }

    pub fn validate(&self, vocab_size: usize) -> Result<(), OracleError> {
        if let Some(bad) = self.logits.iter().find(|v| !v.is_finite()) {
            return Err(self.invalid(format!("non-finite logit {bad}")));
        }
        match &self.token_ids {
            None => {
                if self.logits.len() != vocab_size {
                    return Err(self.invalid(format!(
                        "dense row has {} logits, vocab size is {vocab_size}",
                        self.logits.len()
                    )));
                }
            }
            Some(ids) => {
                if ids.len() != self.logits.len() {
                    return Err(self.invalid("token_ids and logits differ in length"));
                }
                if ids.len() < 2 {
                    return Err(self.invalid("sparse rows need at least 2 entries"));
                }
                if ids.iter().any(|&id| id as usize >= vocab_size) {
                    return Err(self.invalid("token id beyond vocabulary"));
                }
                let mut sorted = ids.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != ids.len() {
                    return Err(self.invalid("duplicate token ids"));
                }
                let tail = self.tail_mass.unwrap_or(0.0);
                if !(0.0..=1.0).contains(&tail) {
                    return Err(self.invalid(format!("tail mass {tail} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Normalize into a dense distribution over `vocab_size` ids.
    ///
    /// For sparse rows the listed ids share `1 - tail_mass` by softmax and the
    /// tail is spread uniformly over the absent ids.
    pub fn to_distribution(&self, vocab_size: usize) -> Result<DistributionRow, OracleError> {
        self.validate(vocab_size)?;
        let probs = match &self.token_ids {
            None => softmax(&self.logits),
            Some(ids) => {
                let absent = vocab_size - ids.len();
                let tail = if absent == 0 {
                    0.0
                } else {
                    self.tail_mass.unwrap_or(0.0)
                };
                let fill = if absent == 0 { 0.0 } else { tail / absent as f64 };
                let mut probs = vec![fill; vocab_size];
                for (&id, p) in ids.iter().zip(softmax(&self.logits)) {
                    probs[id as usize] = (1.0 - tail) * p;
                }
                probs
            }
        };
        Ok(DistributionRow {
            position: self.position,
            probs,
        })
    }
}

/// A normalized probability vector over the full vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub position: usize,
    pub probs: Vec<f64>,
}

impl DistributionRow {
    /// Validating constructor: entries finite and non-negative, total within
    /// [`NORMALIZATION_TOLERANCE`] of one.
    pub fn new(position: usize, probs: Vec<f64>) -> Result<Self, OracleError> {
        let row = Self { position, probs };
        row.check_normalized()?;
        Ok(row)
    }

    pub fn check_normalized(&self) -> Result<(), OracleError> {
        if self.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(OracleError::InvalidRow {
                position: self.position,
                reason: "probabilities must be finite and non-negative".into(),
            });
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(OracleError::InvalidRow {
                position: self.position,
                reason: format!("probabilities sum to {total}"),
            });
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    /// Most probable id, ties to the lower id.
    pub fn argmax(&self) -> (TokenId, f64) {
        argmax(&self.probs)
    }
}

/// Index and value of the maximum, ties to the lower index.
pub fn argmax(values: &[f64]) -> (TokenId, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    (best.0 as TokenId, best.1)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Source of per-position logits for a masked response.
///
/// Implementations must be deterministic for a fixed `(seq, positions, mode)`
/// and safe to call from several decodes at once.
pub trait LogitOracle: Send + Sync {
    fn metadata(&self) -> Result<OracleMetadata, OracleError>;

    /// One row per requested position, in request order. Every requested
    /// position must be masked in `seq`.
    fn query(
        &self,
        seq: &TokenSequence,
        positions: &[usize],
        mode: ConditionMode,
    ) -> Result<Vec<LogitRow>, OracleError>;
}

impl<T: LogitOracle + ?Sized> LogitOracle for &T {
    fn metadata(&self) -> Result<OracleMetadata, OracleError> {
        (**self).metadata()
    }

    fn query(
        &self,
        seq: &TokenSequence,
        positions: &[usize],
        mode: ConditionMode,
    ) -> Result<Vec<LogitRow>, OracleError> {
        (**self).query(seq, positions, mode)
    }
}

impl<T: LogitOracle + ?Sized> LogitOracle for Box<T> {
    fn metadata(&self) -> Result<OracleMetadata, OracleError> {
        (**self).metadata()
    }

    fn query(
        &self,
        seq: &TokenSequence,
        positions: &[usize],
        mode: ConditionMode,
    ) -> Result<Vec<LogitRow>, OracleError> {
        (**self).query(seq, positions, mode)
    }
}

impl<T: LogitOracle + ?Sized> LogitOracle for Arc<T> {
    fn metadata(&self) -> Result<OracleMetadata, OracleError> {
        (**self).metadata()
    }

    fn query(
        &self,
        seq: &TokenSequence,
        positions: &[usize],
        mode: ConditionMode,
    ) -> Result<Vec<LogitRow>, OracleError> {
        (**self).query(seq, positions, mode)
    }
}

/// Shared precondition check for in-process oracles.
pub(crate) fn check_positions(seq: &TokenSequence, positions: &[usize]) -> Result<(), OracleError> {
    for &position in positions {
        if position >= seq.len() {
            return Err(OracleError::PositionOutOfRange {
                position,
                len: seq.len(),
            });
        }
        if !seq.is_masked(position) {
            return Err(OracleError::PositionNotMasked(position));
        }
    }
    Ok(())
}
