//! The reverse-diffusion decode loop.
//!
//! Starting from a fully masked response, each step i = 1..=K
//!
//! 1. queries the oracle on every masked position (plus the condition-dropped
//!    pass when guidance or PDM needs it),
//! 2. applies guidance to the logits,
//! 3. takes the greedy token and its strategy score per position,
//! 4. applies the position & step penalty,
//! 5. commits exactly `commit_counts[i]` positions and leaves the rest masked,
//! 6. appends a step record to the trace.
//!
//! "Remasking" a prediction means not committing it; uncommitted positions
//! are predicted again from scratch on the next step.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::exec;
use crate::guidance::{apply_vrg, GuidanceScale};
use crate::instrument::{pdm, Commit, DecodeTrace, PdmRecord, StepRecord};
use crate::oracle::{ConditionMode, DistributionRow, LogitOracle, LogitRow, OracleError, OracleMetadata};
use crate::scoring::{apply_psp, confidence_score, rank_candidates};
use crate::types::{build_schedule, rel_position, ConfigError, DecodeConfig, PdmScope, ScoredCandidate, TokenId, TokenSequence};

/// Below this many (position x vocabulary) entries per step, scoring stays on
/// the calling thread.
pub const PARALLEL_SCORING_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("oracle metadata unavailable: {0}")]
    Metadata(#[source] OracleError),
    #[error("oracle failed at step {step}: {source}")]
    Oracle {
        step: usize,
        #[source]
        source: OracleError,
        partial: Box<DecodeTrace>,
    },
    #[error("unusable oracle output at step {step}: {message}")]
    InvalidRows {
        step: usize,
        message: String,
        partial: Box<DecodeTrace>,
    },
}

impl DecodeError {
    /// Steps completed before the failure, if the decode got that far.
    pub fn partial_trace(&self) -> Option<&DecodeTrace> {
        match self {
            Self::Oracle { partial, .. } | Self::InvalidRows { partial, .. } => Some(partial),
            _ => None,
        }
    }

    pub fn is_oracle_failure(&self) -> bool {
        matches!(self, Self::Oracle { .. } | Self::Metadata(_))
    }
}

#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub final_tokens: Vec<TokenId>,
    pub trace: DecodeTrace,
    pub oracle_calls: usize,
    pub wall_time: Duration,
}

impl DecodeResult {
    /// Equality on everything except wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.final_tokens == other.final_tokens
            && self.oracle_calls == other.oracle_calls
            && self.trace.steps == other.trace.steps
    }
}

/// Per-position output of one scoring pass.
#[derive(Debug, Clone)]
pub struct ScoredPosition {
    pub candidate: ScoredCandidate,
    /// Full/no-visual distributions, kept only when PDM is on.
    pub pdm_pair: Option<(DistributionRow, DistributionRow)>,
}

/// Score every queried position at `step`.
///
/// `uncond` must be given whenever guidance or PDM is enabled. With
/// `parallel` the positions are scored on the rayon pool (when compiled in);
/// the result is identical to the sequential path.
pub fn score_positions(
    cond: &[LogitRow],
    uncond: Option<&[LogitRow]>,
    step: usize,
    config: &DecodeConfig,
    meta: &OracleMetadata,
    parallel: bool,
) -> Result<Vec<ScoredPosition>, String> {
    if config.needs_unconditional() && uncond.is_none() {
        return Err("condition-dropped rows are required".into());
    }
    if let Some(u) = uncond {
        if u.len() != cond.len() {
            return Err(format!("{} full rows but {} no_visual rows", cond.len(), u.len()));
        }
    }
    let scale = GuidanceScale::new(config.s_vrg).map_err(|e| e.to_string())?;
    let indices: Vec<usize> = (0..cond.len()).collect();
    let score_one = |&k: &usize| -> Result<ScoredPosition, String> {
        let c = &cond[k];
        let u = uncond.map(|rows| &rows[k]);
        let guided = match (config.vrg_enabled, u) {
            (true, Some(u)) => Some(apply_vrg(c, u, scale).map_err(|e| e.to_string())?),
            _ => None,
        };
        let dist = guided
            .as_ref()
            .unwrap_or(c)
            .to_distribution(meta.vocab_size)
            .map_err(|e| e.to_string())?;
        let token = greedy_token(&dist, meta.mask_token_id);
        let confidence = confidence_score(&dist, config.strategy).map_err(|e| e.to_string())?;
        let rel = rel_position(c.position, config.generation_length).map_err(|e| e.to_string())?;
        let penalized = if config.psp_enabled {
            apply_psp(confidence, step, config.steps, rel, config.gamma).map_err(|e| e.to_string())?
        } else {
            confidence
        };
        let pdm_pair = match (config.pdm_enabled, u) {
            (true, Some(u)) => {
                let full = if guided.is_some() {
                    c.to_distribution(meta.vocab_size).map_err(|e| e.to_string())?
                } else {
                    dist.clone()
                };
                Some((full, u.to_distribution(meta.vocab_size).map_err(|e| e.to_string())?))
            }
            _ => None,
        };
        Ok(ScoredPosition {
            candidate: ScoredCandidate {
                position: c.position,
                rel,
                token,
                confidence,
                penalized,
            },
            pdm_pair,
        })
    };
    let scored = if parallel {
        exec::map(&indices, score_one)
    } else {
        exec::map_sequential(&indices, score_one)
    };
    scored.into_iter().collect()
}

/// Greedy token, never the mask id; ties go to the lower id.
fn greedy_token(dist: &DistributionRow, mask_id: TokenId) -> TokenId {
    let mut best: Option<(usize, f64)> = None;
    for (id, &p) in dist.probs.iter().enumerate() {
        if id == mask_id as usize {
            continue;
        }
        if best.is_none_or(|(_, b)| p > b) {
            best = Some((id, p));
        }
    }
    best.map_or(0, |(id, _)| id as TokenId)
}

/// Run one decode from `prompt` (a fully masked response of the configured
/// length) to a fully committed response.
pub fn decode<O: LogitOracle + ?Sized>(
    oracle: &O,
    prompt: &TokenSequence,
    config: &DecodeConfig,
) -> Result<DecodeResult, DecodeError> {
    let started = Instant::now();
    config.validate()?;
    let schedule = build_schedule(config.generation_length, config.steps)?;
    if prompt.len() != config.generation_length {
        return Err(ConfigError::Invalid(format!(
            "prompt has {} positions, config asks for {}",
            prompt.len(),
            config.generation_length
        ))
        .into());
    }
    if prompt.masked_count() != prompt.len() {
        return Err(ConfigError::Invalid("decode must start from a fully masked response".into()).into());
    }
    let meta = oracle.metadata().map_err(DecodeError::Metadata)?;
    if meta.mask_token_id != prompt.mask_id() {
        return Err(ConfigError::Invalid(format!(
            "prompt mask id {} differs from oracle mask id {}",
            prompt.mask_id(),
            meta.mask_token_id
        ))
        .into());
    }

    let mut seq = prompt.clone();
    let mut trace = DecodeTrace::new(config.clone(), schedule.clone(), meta.clone());
    let mut total_calls = 0;

    for step in 1..=config.steps {
        let positions = seq.masked_positions();
        let count = schedule.commits_at(step);
        if positions.is_empty() {
            trace.steps.push(StepRecord {
                step,
                committed: Vec::new(),
                pdm: Vec::new(),
                oracle_calls: 0,
            });
            continue;
        }

        let oracle_failure = |source: OracleError, trace: &DecodeTrace| DecodeError::Oracle {
            step,
            source,
            partial: Box::new(trace.clone()),
        };
        let invalid = |message: String, trace: &DecodeTrace| DecodeError::InvalidRows {
            step,
            message,
            partial: Box::new(trace.clone()),
        };

        let mut calls = 1;
        let cond = oracle
            .query(&seq, &positions, ConditionMode::Full)
            .map_err(|e| oracle_failure(e, &trace))?;
        let uncond = if config.needs_unconditional() {
            calls += 1;
            Some(
                oracle
                    .query(&seq, &positions, ConditionMode::NoVisual)
                    .map_err(|e| oracle_failure(e, &trace))?,
            )
        } else {
            None
        };
        total_calls += calls;

        for rows in std::iter::once(&cond).chain(uncond.as_ref()) {
            let aligned = rows.len() == positions.len()
                && rows.iter().zip(&positions).all(|(r, &p)| r.position == p);
            if !aligned {
                return Err(invalid("rows do not match the requested positions".into(), &trace));
            }
        }

        let parallel = positions.len() * meta.vocab_size >= PARALLEL_SCORING_THRESHOLD;
        let scored = score_positions(&cond, uncond.as_deref(), step, config, &meta, parallel)
            .map_err(|m| invalid(m, &trace))?;
        let candidates: Vec<ScoredCandidate> = scored.iter().map(|s| s.candidate).collect();
        let mut chosen = rank_candidates(&candidates, config.strategy, count).map_err(|e| invalid(e.to_string(), &trace))?;
        chosen.sort_unstable();

        let mut is_chosen = vec![false; seq.len()];
        let mut committed = Vec::with_capacity(chosen.len());
        for s in &scored {
            let c = s.candidate;
            if chosen.binary_search(&c.position).is_ok() {
                seq.commit(c.position, c.token).map_err(|e| invalid(e.to_string(), &trace))?;
                is_chosen[c.position] = true;
                committed.push(Commit {
                    position: c.position,
                    token: c.token,
                    confidence: c.confidence,
                    penalized: c.penalized,
                });
            }
        }

        let mut pdm_records = Vec::new();
        if config.pdm_enabled {
            for s in &scored {
                let position = s.candidate.position;
                let keep = is_chosen[position] || config.pdm_scope == PdmScope::AllMasked;
                if let (true, Some((full, novis))) = (keep, &s.pdm_pair) {
                    let value = pdm(full, novis).map_err(|e| invalid(e.to_string(), &trace))?;
                    pdm_records.push(PdmRecord {
                        step,
                        position,
                        pdm: value,
                        committed: is_chosen[position],
                    });
                }
            }
        }

        trace.steps.push(StepRecord {
            step,
            committed,
            pdm: pdm_records,
            oracle_calls: calls,
        });
        debug_assert_eq!(seq.masked_count(), schedule.masked_after(step));
    }

    Ok(DecodeResult {
        final_tokens: seq.tokens().to_vec(),
        trace,
        oracle_calls: total_calls,
        wall_time: started.elapsed(),
    })
}

/// Decode every prompt; results come back in input order and one failure does
/// not stop the others. Runs on the rayon pool with the `parallel` feature.
pub fn decode_batch<O: LogitOracle + ?Sized>(
    oracle: &O,
    prompts: &[TokenSequence],
    config: &DecodeConfig,
) -> Vec<Result<DecodeResult, DecodeError>> {
    exec::map(prompts, |p| decode(oracle, p, config))
}

/// Single-threaded [`decode_batch`].
pub fn decode_batch_sequential<O: LogitOracle + ?Sized>(
    oracle: &O,
    prompts: &[TokenSequence],
    config: &DecodeConfig,
) -> Vec<Result<DecodeResult, DecodeError>> {
    exec::map_sequential(prompts, |p| decode(oracle, p, config))
}
