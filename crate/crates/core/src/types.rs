//! Shared domain types: the partially masked response, the step schedule and
//! the decode configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instrument::AnswerPattern;
use crate::scoring::ScoreStrategy;

/// Vocabulary index.
pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("generation length must be at least 1")]
    EmptySequence,
    #[error("number of steps must be at least 1")]
    NoSteps,
    #[error("position {position} out of range for length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("tokens ({tokens}) and mask flags ({masked}) differ in length")]
    LengthMismatch { tokens: usize, masked: usize },
    #[error("masked position {position} carries token {token}, expected mask id {mask_id}")]
    MaskedTokenMismatch {
        position: usize,
        token: TokenId,
        mask_id: TokenId,
    },
    #[error("position {0} is already committed")]
    AlreadyCommitted(usize),
    #[error("cannot commit the mask id {0} as a token")]
    CommitMaskId(TokenId),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("{0}")]
    Invalid(String),
}

/// The response state X_t: `L` token slots, each either masked or committed.
///
/// Commits are final within a decode; there is no way to re-mask a slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    tokens: Vec<TokenId>,
    masked: Vec<bool>,
    mask_id: TokenId,
}

impl TokenSequence {
    /// The initial state X_1: every slot holds the mask id.
    pub fn fully_masked(len: usize, mask_id: TokenId) -> Result<Self, ConfigError> {
        if len == 0 {
            return Err(ConfigError::EmptySequence);
        }
        Ok(Self {
            tokens: vec![mask_id; len],
            masked: vec![true; len],
            mask_id,
        })
    }

    pub fn from_parts(
        tokens: Vec<TokenId>,
        masked: Vec<bool>,
        mask_id: TokenId,
    ) -> Result<Self, ConfigError> {
        if tokens.len() != masked.len() {
            return Err(ConfigError::LengthMismatch {
                tokens: tokens.len(),
                masked: masked.len(),
            });
        }
        if tokens.is_empty() {
            return Err(ConfigError::EmptySequence);
        }
        for (position, (&token, &m)) in tokens.iter().zip(&masked).enumerate() {
            if m && token != mask_id {
                return Err(ConfigError::MaskedTokenMismatch {
                    position,
                    token,
                    mask_id,
                });
            }
        }
        Ok(Self {
            tokens,
            masked,
            mask_id,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn mask_flags(&self) -> &[bool] {
        &self.masked
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn is_masked(&self, position: usize) -> bool {
        self.masked.get(position).copied().unwrap_or(false)
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        self.masked
            .iter()
            .enumerate()
            .filter_map(|(j, &m)| m.then_some(j))
            .collect()
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    /// Fix `token` at `position`. Fails if the slot is already committed.
    pub fn commit(&mut self, position: usize, token: TokenId) -> Result<(), ConfigError> {
        let len = self.len();
        let slot = self
            .masked
            .get_mut(position)
            .ok_or(ConfigError::PositionOutOfRange { position, len })?;
        if !*slot {
            return Err(ConfigError::AlreadyCommitted(position));
        }
        if token == self.mask_id {
            return Err(ConfigError::CommitMaskId(token));
        }
        *slot = false;
        self.tokens[position] = token;
        Ok(())
    }
}

/// The discrete time grid t_0 = 1 > t_1 > ... > t_K = 0 together with the
/// number of slots that stay masked after each step and how many get
/// committed at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub len: usize,
    pub steps: usize,
    /// `times[i]` is t_i for i = 0..=K.
    pub times: Vec<f64>,
    /// `masked_targets[i]` is round-half-up(L * t_i) for i = 0..=K.
    pub masked_targets: Vec<usize>,
    /// `commit_counts[i - 1]` is the number of commits at step i.
    pub commit_counts: Vec<usize>,
}

impl StepSchedule {
    /// Commits scheduled at step `step` (1-based).
    pub fn commits_at(&self, step: usize) -> usize {
        self.commit_counts[step - 1]
    }

    /// Masked slots remaining after step `step` (0 = before any step).
    pub fn masked_after(&self, step: usize) -> usize {
        self.masked_targets[step]
    }
}

/// Linear schedule t_i = 1 - i/K.
///
/// Masked targets are computed in integer arithmetic as
/// floor((2 L (K - i) + K) / 2K), i.e. round-half-up of L (K - i) / K, and
/// commit counts are their successive differences so they always sum to L.
pub fn build_schedule(len: usize, steps: usize) -> Result<StepSchedule, ConfigError> {
    if len == 0 {
        return Err(ConfigError::EmptySequence);
    }
    if steps == 0 {
        return Err(ConfigError::NoSteps);
    }
    let (l, k) = (len as u128, steps as u128);
    let times = (0..=steps)
        .map(|i| 1.0 - i as f64 / steps as f64)
        .collect();
    let masked_targets: Vec<usize> = (0..=steps as u128)
        .map(|i| ((2 * l * (k - i) + k) / (2 * k)) as usize)
        .collect();
    let commit_counts = masked_targets.windows(2).map(|w| w[0] - w[1]).collect();
    Ok(StepSchedule {
        len,
        steps,
        times,
        masked_targets,
        commit_counts,
    })
}

/// Normalized position j / (L - 1); a single-slot response maps to 0.
pub fn rel_position(position: usize, len: usize) -> Result<f64, ConfigError> {
    if position >= len {
        return Err(ConfigError::PositionOutOfRange { position, len });
    }
    if len == 1 {
        return Ok(0.0);
    }
    Ok(position as f64 / (len - 1) as f64)
}

/// Which positions get a PDM record at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdmScope {
    /// Only the positions committed at that step.
    #[default]
    Committed,
    /// Every position that was masked when the step started.
    AllMasked,
}

fn default_gamma() -> f64 {
    0.5
}

fn default_s_vrg() -> f64 {
    0.5
}

/// Knobs for one decode. Defaults follow the reference experiment setup:
/// low-confidence remasking, gamma = 0.5, s_vrg = 0.5, greedy tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    #[serde(default)]
    pub strategy: ScoreStrategy,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_s_vrg")]
    pub s_vrg: f64,
    #[serde(default)]
    pub vrg_enabled: bool,
    #[serde(default)]
    pub psp_enabled: bool,
    pub generation_length: usize,
    pub steps: usize,
    #[serde(default)]
    pub pdm_enabled: bool,
    #[serde(default)]
    pub pdm_scope: PdmScope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_pattern: Option<AnswerPattern>,
    #[serde(default)]
    pub seed: u64,
}

impl DecodeConfig {
    /// Baseline low-confidence decode with every extra switched off.
    pub fn new(generation_length: usize, steps: usize) -> Self {
        Self {
            strategy: ScoreStrategy::default(),
            gamma: default_gamma(),
            s_vrg: default_s_vrg(),
            vrg_enabled: false,
            psp_enabled: false,
            generation_length,
            steps,
            pdm_enabled: false,
            pdm_scope: PdmScope::default(),
            answer_pattern: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.generation_length == 0 {
            return Err(ConfigError::EmptySequence);
        }
        if self.steps == 0 {
            return Err(ConfigError::NoSteps);
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ConfigError::OutOfRange {
                name: "gamma",
                value: self.gamma,
                range: "[0, 1]",
            });
        }
        if !(self.s_vrg.is_finite() && self.s_vrg >= 0.0) {
            return Err(ConfigError::OutOfRange {
                name: "s_vrg",
                value: self.s_vrg,
                range: "[0, inf)",
            });
        }
        if let Some(pattern) = &self.answer_pattern {
            pattern.validate()?;
        }
        Ok(())
    }

    /// Whether a step needs the condition-dropped pass in addition to the full one.
    pub fn needs_unconditional(&self) -> bool {
        self.vrg_enabled || self.pdm_enabled
    }

    /// Short method label such as `low_confidence+psp+vrg`.
    pub fn label(&self) -> String {
        let mut label = self.strategy.as_str().to_string();
        if self.psp_enabled {
            label.push_str("+psp");
        }
        if self.vrg_enabled {
            label.push_str("+vrg");
        }
        label
    }
}

/// A masked position scored at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub position: usize,
    pub rel: f64,
    pub token: TokenId,
    /// Strategy score before the position/step penalty.
    pub confidence: f64,
    /// Score after the penalty (equal to `confidence` when it is disabled).
    pub penalized: f64,
}
