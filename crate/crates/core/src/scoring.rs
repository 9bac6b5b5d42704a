//! Per-position scores, the position & step penalty, and commit selection.
//!
//! Every strategy maps a probability row to a score in [0, 1] where higher
//! means "commit sooner":
//!
//! | strategy         | score                           |
//! |------------------|---------------------------------|
//! | `low_confidence` | max_k p_k                       |
//! | `margin`         | p_(1) - p_(2)                   |
//! | `entropy`        | 1 - H(p) / ln V                 |
//! | `left_to_right`  | max_k p_k (ranking ignores it)  |
//!
//! The penalty multiplies the strategy score by `1 - gamma (1 - i/K) rel(j)`,
//! so late positions are held back early in the decode and the penalty fades
//! out as the step index reaches K.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{DistributionRow, NORMALIZATION_TOLERANCE};
use crate::types::ScoredCandidate;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("row at position {position} sums to {total}, not 1")]
    NotNormalized { position: usize, total: f64 },
    #[error("entropy score needs a vocabulary of at least 2, got {0}")]
    VocabTooSmall(usize),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("step {step} outside 1..={steps}")]
    StepOutOfRange { step: usize, steps: usize },
    #[error("asked for {count} commits from {available} candidates")]
    CountExceedsCandidates { count: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStrategy {
    #[default]
    LowConfidence,
    Entropy,
    Margin,
    LeftToRight,
}

impl ScoreStrategy {
    pub const ALL: [ScoreStrategy; 4] = [
        Self::LowConfidence,
        Self::Entropy,
        Self::Margin,
        Self::LeftToRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LowConfidence => "low_confidence",
            Self::Entropy => "entropy",
            Self::Margin => "margin",
            Self::LeftToRight => "left_to_right",
        }
    }
}

pub fn confidence_score(row: &DistributionRow, strategy: ScoreStrategy) -> Result<f64, ScoreError> {
    let total: f64 = row.probs.iter().sum();
    if !total.is_finite() || (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(ScoreError::NotNormalized {
            position: row.position,
            total,
        });
    }
    let score = match strategy {
        ScoreStrategy::LowConfidence | ScoreStrategy::LeftToRight => {
            row.probs.iter().copied().fold(0.0, f64::max)
        }
        ScoreStrategy::Margin => {
            let (mut first, mut second) = (0.0f64, 0.0f64);
            for &p in &row.probs {
                if p > first {
                    second = first;
                    first = p;
                } else if p > second {
                    second = p;
                }
            }
            first - second
        }
        ScoreStrategy::Entropy => {
            let vocab = row.vocab_size();
            if vocab < 2 {
                return Err(ScoreError::VocabTooSmall(vocab));
            }
            let entropy: f64 = row
                .probs
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum();
            1.0 - entropy / (vocab as f64).ln()
        }
    };
    Ok(score.clamp(0.0, 1.0))
}

fn check_unit(name: &'static str, value: f64) -> Result<(), ScoreError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ScoreError::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

/// Position & step penalty: `score * (1 - gamma * (1 - step/steps) * rel)`.
pub fn apply_psp(score: f64, step: usize, steps: usize, rel: f64, gamma: f64) -> Result<f64, ScoreError> {
    check_unit("confidence", score)?;
    check_unit("rel", rel)?;
    check_unit("gamma", gamma)?;
    if step == 0 || step > steps {
        return Err(ScoreError::StepOutOfRange { step, steps });
    }
    let progress = step as f64 / steps as f64;
    Ok(score * (1.0 - gamma * (1.0 - progress) * rel))
}

/// Commit order: higher penalized score first, then lower position, then
/// lower token id.
fn by_score(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.penalized
        .total_cmp(&a.penalized)
        .then(a.position.cmp(&b.position))
        .then(a.token.cmp(&b.token))
}

/// Positions of the `count` candidates to commit, best first.
///
/// Score strategies keep the highest penalized scores; left-to-right keeps the
/// leftmost positions.
pub fn rank_candidates(
    cands: &[ScoredCandidate],
    strategy: ScoreStrategy,
    count: usize,
) -> Result<Vec<usize>, ScoreError> {
    if count > cands.len() {
        return Err(ScoreError::CountExceedsCandidates {
            count,
            available: cands.len(),
        });
    }
    let mut order: Vec<&ScoredCandidate> = cands.iter().collect();
    match strategy {
        ScoreStrategy::LeftToRight => order.sort_by_key(|c| (c.position, c.token)),
        _ => order.sort_by(|a, b| by_score(a, b)),
    }
    Ok(order.into_iter().take(count).map(|c| c.position).collect())
}
