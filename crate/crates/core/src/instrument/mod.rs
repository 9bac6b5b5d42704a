//! Measurement: prompt dependency (PDM), answer-step detection, decode traces
//! and their aggregation.

pub mod analysis;
pub mod answer;
pub mod pdm;
pub mod trace;

pub use analysis::{answer_histogram, answer_steps, pdm_curve, AnswerHistogram, CurvePoint};
pub use answer::{answer_step, render_text, AnswerPattern};
pub use pdm::{hellinger, pdm, PdmError};
pub use trace::{Commit, DecodeTrace, PdmRecord, StepRecord, TraceError, TraceHeader, TRACE_SCHEMA};
