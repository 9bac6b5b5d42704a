//! Visual reasoning guidance: classifier-free-guidance style extrapolation
//! from the condition-dropped logits towards the fully conditioned ones.
//!
//! `guided = uncond + (s + 1) * (cond - uncond)`
//!
//! Guidance acts on logits; token choice and confidence are both taken from
//! the softmax of the guided row.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::LogitRow;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuidanceError {
    #[error("guidance scale {0} must be finite and non-negative")]
    InvalidScale(f64),
    #[error("rows are for different positions ({cond} vs {uncond})")]
    PositionMismatch { cond: usize, uncond: usize },
    #[error("rows at position {0} have different supports")]
    SupportMismatch(usize),
}

/// Non-negative guidance scale s_vrg. Zero turns guidance off.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct GuidanceScale(f64);

impl GuidanceScale {
    pub const DEFAULT: GuidanceScale = GuidanceScale(0.5);

    pub fn new(scale: f64) -> Result<Self, GuidanceError> {
        if scale.is_finite() && scale >= 0.0 {
            Ok(Self(scale))
        } else {
            Err(GuidanceError::InvalidScale(scale))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for GuidanceScale {
    type Error = GuidanceError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<GuidanceScale> for f64 {
    fn from(s: GuidanceScale) -> f64 {
        s.0
    }
}

/// Combine aligned conditional and unconditional rows.
///
/// At scale zero the conditional row is returned unchanged; the closed form
/// `u + (c - u)` is not bit-exact in floating point. Sparse rows must share
/// their id list; the result keeps the conditional row's tail mass.
pub fn apply_vrg(cond: &LogitRow, uncond: &LogitRow, scale: GuidanceScale) -> Result<LogitRow, GuidanceError> {
    if cond.position != uncond.position {
        return Err(GuidanceError::PositionMismatch {
            cond: cond.position,
            uncond: uncond.position,
        });
    }
    if cond.token_ids != uncond.token_ids || cond.logits.len() != uncond.logits.len() {
        return Err(GuidanceError::SupportMismatch(cond.position));
    }
    if scale.0 == 0.0 {
        return Ok(cond.clone());
    }
    let factor = scale.0 + 1.0;
    let logits = cond
        .logits
        .iter()
        .zip(&uncond.logits)
        .map(|(&c, &u)| u + factor * (c - u))
        .collect();
    Ok(LogitRow {
        position: cond.position,
        token_ids: cond.token_ids.clone(),
        logits,
        tail_mass: cond.tail_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scale(s: f64) -> GuidanceScale {
        GuidanceScale::new(s).unwrap()
    }

    #[test]
    fn hand_evaluated() {
        let u = LogitRow::dense(0, vec![0.0, 0.0]);
        let c = LogitRow::dense(0, vec![2.0, -1.0]);
        let g = apply_vrg(&c, &u, scale(0.5)).unwrap();
        assert_eq!(g.logits, vec![3.0, -1.5]);
    }

    #[test]
    fn zero_scale_is_identity() {
        let u = LogitRow::dense(2, vec![1e20, -3.0, 0.1]);
        let c = LogitRow::dense(2, vec![1.0, 7.5, 0.3]);
        assert_eq!(apply_vrg(&c, &u, scale(0.0)).unwrap(), c);
    }

    #[test]
    fn equal_rows_are_fixed_points() {
        let c = LogitRow::dense(1, vec![0.25, -4.0, 9.0]);
        for s in [0.0, 0.5, 1.0, 3.7] {
            assert_eq!(apply_vrg(&c, &c, scale(s)).unwrap(), c);
        }
    }

    #[test]
    fn mismatches_are_rejected() {
        let a = LogitRow::dense(0, vec![0.0, 1.0]);
        let b = LogitRow::dense(1, vec![0.0, 1.0]);
        assert!(matches!(
            apply_vrg(&a, &b, scale(1.0)),
            Err(GuidanceError::PositionMismatch { .. })
        ));
        let s1 = LogitRow::sparse(0, vec![1, 2], vec![0.0, 1.0], 0.1);
        let s2 = LogitRow::sparse(0, vec![1, 3], vec![0.0, 1.0], 0.1);
        assert_eq!(apply_vrg(&s1, &s2, scale(1.0)), Err(GuidanceError::SupportMismatch(0)));
        assert_eq!(apply_vrg(&a, &s1, scale(1.0)), Err(GuidanceError::SupportMismatch(0)));
    }

    #[test]
    fn sparse_rows_keep_support() {
        let c = LogitRow::sparse(4, vec![1, 2], vec![2.0, 0.0], 0.1);
        let u = LogitRow::sparse(4, vec![1, 2], vec![1.0, 0.0], 0.2);
        let g = apply_vrg(&c, &u, scale(1.0)).unwrap();
        assert_eq!(g.token_ids, Some(vec![1, 2]));
        assert_eq!(g.logits, vec![3.0, 0.0]);
        assert_eq!(g.tail_mass, Some(0.1));
    }

    #[test]
    fn negative_scale_rejected() {
        assert!(GuidanceScale::new(-0.1).is_err());
        assert!(GuidanceScale::new(f64::NAN).is_err());
        assert!(serde_json::from_str::<GuidanceScale>("-1.0").is_err());
    }
}
