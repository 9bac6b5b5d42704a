use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::wire::{ErrorBody, LogitsRequest, LogitsResponse};
use crate::oracle::{check_positions, ConditionMode, LogitOracle, LogitRow, OracleError, OracleMetadata};
use crate::types::TokenSequence;

const CACHE_LIMIT: usize = 4096;

/// Oracle backed by a model server speaking the logits protocol.
///
/// Request ids are content hashes, so a repeated query (same state, positions,
/// mode and top-k) is answered from a local cache and stays bit-identical.
pub struct RemoteOracle {
    base_url: String,
    client: reqwest::blocking::Client,
    top_k: Option<usize>,
    metadata: OnceLock<OracleMetadata>,
    cache: Mutex<HashMap<String, Vec<LogitRow>>>,
}

impl std::fmt::Debug for RemoteOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteOracle")
            .field("base_url", &self.base_url)
            .field("top_k", &self.top_k)
            .finish()
    }
}

fn transport(err: reqwest::Error) -> OracleError {
    OracleError::Transport(err.to_string())
}

impl RemoteOracle {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, OracleError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(transport)?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
            top_k: None,
            metadata: OnceLock::new(),
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Ask the server for sparse top-k rows instead of full-vocabulary rows.
    pub fn with_top_k(mut self, top_k: Option<usize>) -> Self {
        self.top_k = top_k;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn check_status(resp: reqwest::blocking::Response) -> Result<reqwest::blocking::Response, OracleError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().unwrap_or_default();
        let detail = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        Err(OracleError::Transport(format!("HTTP {status}: {detail}")))
    }
}

fn request_id(req: &LogitsRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&(&req.token_ids, &req.masked, &req.positions, req.mode, req.top_k)).unwrap_or_default());
    hasher.finalize()[..16].iter().map(|b| format!("{b:02x}")).collect()
}

impl LogitOracle for RemoteOracle {
    fn metadata(&self) -> Result<OracleMetadata, OracleError> {
        if let Some(meta) = self.metadata.get() {
            return Ok(meta.clone());
        }
        let resp = self
            .client
            .get(format!("{}/v1/metadata", self.base_url))
            .send()
            .map_err(transport)?;
        let meta: OracleMetadata = Self::check_status(resp)?
            .json()
            .map_err(|e| OracleError::MalformedResponse(e.to_string()))?;
        meta.validate()
            .map_err(|e| OracleError::MalformedResponse(e.to_string()))?;
        Ok(self.metadata.get_or_init(|| meta).clone())
    }

    fn query(
        &self,
        seq: &TokenSequence,
        positions: &[usize],
        mode: ConditionMode,
    ) -> Result<Vec<LogitRow>, OracleError> {
        check_positions(seq, positions)?;
        let mut req = LogitsRequest {
            request_id: String::new(),
            token_ids: seq.tokens().to_vec(),
            masked: seq.mask_flags().to_vec(),
            positions: positions.to_vec(),
            mode,
            top_k: self.top_k,
        };
        req.request_id = request_id(&req);
        if let Some(rows) = self.cache.lock().expect("cache lock").get(&req.request_id) {
            return Ok(rows.clone());
        }
        let vocab = self.metadata()?.vocab_size;

        let resp = self
            .client
            .post(format!("{}/v1/logits", self.base_url))
            .json(&req)
            .send()
            .map_err(transport)?;
        let body: LogitsResponse = Self::check_status(resp)?
            .json()
            .map_err(|e| OracleError::MalformedResponse(e.to_string()))?;
        if body.request_id != req.request_id {
            return Err(OracleError::MalformedResponse(format!(
                "response id {} for request {}",
                body.request_id, req.request_id
            )));
        }
        if body.rows.len() != positions.len() {
            return Err(OracleError::MalformedResponse(format!(
                "{} rows for {} positions",
                body.rows.len(),
                positions.len()
            )));
        }
        let rows: Vec<LogitRow> = body.rows.into_iter().map(LogitRow::from).collect();
        for (row, &p) in rows.iter().zip(positions) {
            if row.position != p {
                return Err(OracleError::MalformedResponse(format!(
                    "row for position {} where {p} was requested",
                    row.position
                )));
            }
            row.validate(vocab)
                .map_err(|e| OracleError::MalformedResponse(e.to_string()))?;
        }

        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(req.request_id, rows.clone());
        Ok(rows)
    }
}
