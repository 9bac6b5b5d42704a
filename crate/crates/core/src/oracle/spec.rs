use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AnswerBias, LatencyOracle, LogitOracle, MixtureOracle, OracleError, OracleMetadata, TemplateOracle};
use crate::remote::RemoteOracle;
use crate::types::TokenId;

/// Per-position confidence for the template oracle: one value for every
/// position or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Constant(f64),
    PerPosition(Vec<f64>),
}

impl Default for Profile {
    fn default() -> Self {
        Self::Constant(0.6)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSpec {
    /// Defaults to the last position.
    #[serde(default)]
    pub position: Option<usize>,
    pub boost: f64,
}

fn default_vocab() -> usize {
    32
}

fn default_base_scale() -> f64 {
    4.0
}

fn default_context_weight() -> f64 {
    1.0
}

fn default_visual_strength() -> f64 {
    3.0
}

fn default_timeout_ms() -> u64 {
    30_000
}

/// Declarative oracle description as it appears in experiment configs and on
/// the `toy-serve` command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    Template {
        #[serde(default = "default_vocab")]
        vocab_size: usize,
        #[serde(default)]
        mask_token_id: TokenId,
        /// Defaults to ids cycling through the non-mask vocabulary.
        #[serde(default)]
        target: Option<Vec<TokenId>>,
        #[serde(default)]
        profile: Profile,
        #[serde(default)]
        answer_bias: Option<BiasSpec>,
        #[serde(default)]
        tokens: Option<Vec<String>>,
        #[serde(default)]
        latency_ms: Option<u64>,
    },
    Mixture {
        #[serde(default = "default_vocab")]
        vocab_size: usize,
        #[serde(default)]
        mask_token_id: TokenId,
        /// Added to the run seed.
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        visual_positions: Vec<usize>,
        #[serde(default = "default_base_scale")]
        base_scale: f64,
        #[serde(default = "default_context_weight")]
        context_weight: f64,
        #[serde(default = "default_visual_strength")]
        visual_strength: f64,
        #[serde(default)]
        tokens: Option<Vec<String>>,
        #[serde(default)]
        latency_ms: Option<u64>,
    },
    Remote {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default)]
        top_k: Option<usize>,
    },
}

impl OracleSpec {
    pub fn is_remote(&self) -> bool {
        matches!(self, Self::Remote { .. })
    }

    /// Instantiate for a response of `len` positions; `seed` is the run seed.
    pub fn build(&self, len: usize, seed: u64) -> Result<Box<dyn LogitOracle>, OracleError> {
        match self {
            Self::Template {
                vocab_size,
                mask_token_id,
                target,
                profile,
                answer_bias,
                tokens,
                latency_ms,
            } => {
                let meta = metadata(*vocab_size, *mask_token_id, tokens.as_deref())?;
                let target = match target {
                    Some(t) => t.clone(),
                    None => default_target(len, &meta),
                };
                let profile = match profile {
                    Profile::Constant(c) => vec![*c; target.len()],
                    Profile::PerPosition(p) => p.clone(),
                };
                let bias = answer_bias.map(|b| AnswerBias {
                    position: b.position.unwrap_or(target.len().saturating_sub(1)),
                    boost: b.boost,
                });
                let oracle = TemplateOracle::new(meta, target, profile, bias)?;
                Ok(with_latency(oracle, *latency_ms))
            }
            Self::Mixture {
                vocab_size,
                mask_token_id,
                seed: base_seed,
                visual_positions,
                base_scale,
                context_weight,
                visual_strength,
                tokens,
                latency_ms,
            } => {
                let meta = metadata(*vocab_size, *mask_token_id, tokens.as_deref())?;
                let oracle = MixtureOracle::new(meta, base_seed.wrapping_add(seed))?
                    .with_visual_positions(visual_positions.iter().copied())
                    .with_scales(*base_scale, *context_weight, *visual_strength);
                Ok(with_latency(oracle, *latency_ms))
            }
            Self::Remote {
                url,
                timeout_ms,
                top_k,
            } => {
                let oracle = RemoteOracle::new(url, Duration::from_millis(*timeout_ms))?.with_top_k(*top_k);
                Ok(Box::new(oracle))
            }
        }
    }
}

fn metadata(vocab_size: usize, mask: TokenId, tokens: Option<&[String]>) -> Result<OracleMetadata, OracleError> {
    let meta = OracleMetadata::new(vocab_size, mask)?;
    match tokens {
        Some(t) if t.len() != vocab_size => Err(OracleError::InvalidConfig(format!(
            "{} token strings for a vocabulary of {vocab_size}",
            t.len()
        ))),
        Some(t) => Ok(meta.with_tokens(t)),
        None => Ok(meta),
    }
}

fn default_target(len: usize, meta: &OracleMetadata) -> Vec<TokenId> {
    let ids: Vec<TokenId> = (0..meta.vocab_size as TokenId)
        .filter(|&t| t != meta.mask_token_id)
        .collect();
    (0..len).map(|j| ids[j % ids.len()]).collect()
}

fn with_latency<O: LogitOracle + 'static>(oracle: O, latency_ms: Option<u64>) -> Box<dyn LogitOracle> {
    match latency_ms {
        Some(ms) if ms > 0 => Box::new(LatencyOracle::new(oracle, Duration::from_millis(ms))),
        _ => Box::new(oracle),
    }
}
