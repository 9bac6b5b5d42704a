use serde::{Deserialize, Serialize};

use super::{check_positions, ConditionMode, LogitOracle, LogitRow, OracleError, OracleMetadata, MASK_LOGIT};
use crate::types::{TokenId, TokenSequence};

/// Extra probability put on the target token at one position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerBias {
    pub position: usize,
    pub boost: f64,
}

/// Synthetic oracle with a fixed target response.
///
/// Row `j` puts probability `profile[j]` (plus the bias boost at the biased
/// position) on `target[j]` and spreads the rest uniformly over the other
/// non-mask ids, whatever the state or condition mode. Greedy decoding
/// therefore always reproduces `target`; the profile only changes the order
/// in which positions get committed.
#[derive(Debug, Clone)]
pub struct TemplateOracle {
    meta: OracleMetadata,
    target: Vec<TokenId>,
    peak: Vec<f64>,
}

impl TemplateOracle {
    pub fn new(
        meta: OracleMetadata,
        target: Vec<TokenId>,
        profile: Vec<f64>,
        answer_bias: Option<AnswerBias>,
    ) -> Result<Self, OracleError> {
        meta.validate()?;
        let invalid = |msg: String| Err(OracleError::InvalidConfig(msg));
        if meta.vocab_size < 3 {
            return invalid("template oracle needs a vocabulary of at least 3".into());
        }
        if target.is_empty() || profile.len() != target.len() {
            return invalid(format!(
                "target ({}) and profile ({}) must be non-empty and equally long",
                target.len(),
                profile.len()
            ));
        }
        if let Some(&t) = target
            .iter()
            .find(|&&t| t as usize >= meta.vocab_size || t == meta.mask_token_id)
        {
            return invalid(format!("target token {t} is the mask id or outside the vocabulary"));
        }
        if let Some(p) = profile.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return invalid(format!("profile value {p} outside (0, 1)"));
        }
        let mut peak = profile;
        if let Some(bias) = answer_bias {
            if bias.position >= target.len() {
                return invalid(format!("bias position {} beyond target", bias.position));
            }
            let boosted = peak[bias.position] + bias.boost;
            if !(boosted > 0.0 && boosted < 1.0) {
                return invalid(format!("boosted probability {boosted} outside (0, 1)"));
            }
            peak[bias.position] = boosted;
        }
        Ok(Self { meta, target, peak })
    }

    /// Constant profile over `target`.
    pub fn uniform(
        meta: OracleMetadata,
        target: Vec<TokenId>,
        confidence: f64,
        answer_bias: Option<AnswerBias>,
    ) -> Result<Self, OracleError> {
        let profile = vec![confidence; target.len()];
        Self::new(meta, target, profile, answer_bias)
    }

    pub fn target(&self) -> &[TokenId] {
        &self.target
    }

    /// Probability of the target token at `position`, boost included.
    pub fn peak(&self, position: usize) -> f64 {
        self.peak[position]
    }

    fn row(&self, position: usize) -> LogitRow {
        let vocab = self.meta.vocab_size;
        let p = self.peak[position];
        let rest = ((1.0 - p) / (vocab - 2) as f64).ln();
        let mut logits = vec![rest; vocab];
        logits[self.meta.mask_token_id as usize] = MASK_LOGIT;
        logits[self.target[position] as usize] = p.ln();
        LogitRow::dense(position, logits)
    }
}

impl LogitOracle for TemplateOracle {
    fn metadata(&self) -> Result<OracleMetadata, OracleError> {
        Ok(self.meta.clone())
    }

    fn query(
        &self,
        seq: &TokenSequence,
        positions: &[usize],
        _mode: ConditionMode,
    ) -> Result<Vec<LogitRow>, OracleError> {
        check_positions(seq, positions)?;
        if seq.len() != self.target.len() {
            return Err(OracleError::InvalidConfig(format!(
                "sequence length {} differs from template length {}",
                seq.len(),
                self.target.len()
            )));
        }
        Ok(positions.iter().map(|&j| self.row(j)).collect())
    }
}
