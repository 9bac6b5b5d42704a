//! Inference engine for masked discrete diffusion language models.
//!
//! A decode starts from a fully masked response and commits a scheduled
//! number of positions per step, choosing them by a remasking strategy score.
//! On top of the plain reverse process the engine provides:
//!
//! * a position & step penalty that holds back late positions early in the
//!   decode ([`scoring::apply_psp`]),
//! * classifier-free-style guidance between the full and the
//!   condition-dropped model pass ([`guidance::apply_vrg`]),
//! * prompt-dependency measurement and answer-step detection over decode
//!   traces ([`instrument`]).
//!
//! The model is abstracted as a [`LogitOracle`]; toy oracles and an HTTP
//! client/server pair are included.

pub mod exec;
pub mod guidance;
pub mod instrument;
pub mod oracle;
pub mod remote;
pub mod scheduler;
pub mod scoring;
pub mod types;

pub use guidance::{apply_vrg, GuidanceScale};
pub use instrument::{answer_step, pdm, pdm_curve, AnswerPattern, DecodeTrace};
pub use oracle::{ConditionMode, LogitOracle, LogitRow, OracleMetadata};
pub use scheduler::{decode, decode_batch, decode_batch_sequential, DecodeError, DecodeResult};
pub use scoring::{apply_psp, confidence_score, rank_candidates, ScoreStrategy};
pub use types::{build_schedule, rel_position, DecodeConfig, StepSchedule, TokenId, TokenSequence};
