//! JSON bodies of the logits protocol.
//!
//! ```text
//! POST /v1/logits    {request_id, token_ids, masked, positions, mode, top_k?}
//!                 -> {request_id, rows: [{position, token_ids?, logits, tail_mass?}]}
//! GET  /v1/metadata -> {vocab_size, mask_token_id, id_to_token?}
//! 4xx/5xx           -> {error}
//! ```
//!
//! Logits travel as 32-bit floats.

use serde::{Deserialize, Serialize};

use crate::oracle::{ConditionMode, LogitRow, OracleMetadata};
use crate::types::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsRequest {
    pub request_id: String,
    pub token_ids: Vec<TokenId>,
    pub masked: Vec<bool>,
    pub positions: Vec<usize>,
    pub mode: ConditionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRow {
    pub position: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_ids: Option<Vec<TokenId>>,
    pub logits: Vec<f32>,
    /// Probability mass outside `token_ids` for top-k rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_mass: Option<f32>,
}

impl From<&LogitRow> for WireRow {
    fn from(row: &LogitRow) -> Self {
        Self {
            position: row.position,
            token_ids: row.token_ids.clone(),
            logits: row.logits.iter().map(|&l| l as f32).collect(),
            tail_mass: row.tail_mass.map(|t| t as f32),
        }
    }
}

impl From<WireRow> for LogitRow {
    fn from(row: WireRow) -> Self {
        Self {
            position: row.position,
            token_ids: row.token_ids,
            logits: row.logits.into_iter().map(f64::from).collect(),
            tail_mass: row.tail_mass.map(f64::from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsResponse {
    pub request_id: String,
    pub rows: Vec<WireRow>,
}

pub type MetadataResponse = OracleMetadata;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Keep the `k` highest logits of a dense row (ties to the lower id) and
/// record the softmax mass of everything dropped.
pub fn top_k_row(row: &LogitRow, k: usize) -> LogitRow {
    if row.is_sparse() || k >= row.logits.len() {
        return row.clone();
    }
    let k = k.max(2);
    let probs = crate::oracle::softmax(&row.logits);
    let mut ids: Vec<usize> = (0..row.logits.len()).collect();
    ids.sort_by(|&a, &b| row.logits[b].total_cmp(&row.logits[a]).then(a.cmp(&b)));
    ids.truncate(k);
    let kept: f64 = ids.iter().map(|&i| probs[i]).sum();
    LogitRow::sparse(
        row.position,
        ids.iter().map(|&i| i as TokenId).collect(),
        ids.iter().map(|&i| row.logits[i]).collect(),
        (1.0 - kept).clamp(0.0, 1.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_shape() {
        let req = LogitsRequest {
            request_id: "r1".into(),
            token_ids: vec![0, 5],
            masked: vec![true, false],
            positions: vec![0],
            mode: ConditionMode::NoVisual,
            top_k: None,
        };
        let json = serde_json::to_string(&req).unwrap();
        assert_eq!(
            json,
            r#"{"request_id":"r1","token_ids":[0,5],"masked":[true,false],"positions":[0],"mode":"no_visual"}"#
        );
    }

    #[test]
    fn top_k_keeps_best() {
        let row = LogitRow::dense(2, vec![0.0, 3.0, 1.0, 3.0, -2.0]);
        let sparse = top_k_row(&row, 3);
        assert_eq!(sparse.token_ids, Some(vec![1, 3, 2]));
        assert_eq!(sparse.logits, vec![3.0, 3.0, 1.0]);
        let probs = crate::oracle::softmax(&row.logits);
        let tail = probs[0] + probs[4];
        assert!((sparse.tail_mass.unwrap() - tail).abs() < 1e-12);
        let dist = sparse.to_distribution(5).unwrap();
        assert!((dist.probs[1] - probs[1]).abs() < 1e-12);
    }
}
