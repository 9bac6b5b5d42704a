//! Decode traces and their JSON-lines file format.
//!
//! A trace file starts with one header line carrying the schema tag, the
//! config snapshot, the schedule and the oracle metadata, followed by one line
//! per completed step:
//!
//! ```text
//! {"record":"header","schema":"dift-trace/1","label":"low_confidence+psp",...}
//! {"record":"step","step":1,"committed":[...],"pdm":[...],"oracle_calls":1}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::OracleMetadata;
use crate::types::{DecodeConfig, StepSchedule, TokenId};

pub const TRACE_SCHEMA: &str = "dift-trace/1";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported trace schema {found:?}, expected {TRACE_SCHEMA:?}")]
    Schema { found: String },
    #[error("trace has no header line")]
    MissingHeader,
    #[error("line {0}: header may only appear once, on the first line")]
    MisplacedHeader(usize),
    #[error("invalid trace: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub label: String,
    pub config: DecodeConfig,
    pub schedule: StepSchedule,
    pub metadata: OracleMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Commit {
    pub position: usize,
    pub token: TokenId,
    pub confidence: f64,
    pub penalized: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdmRecord {
    pub step: usize,
    pub position: usize,
    pub pdm: f64,
    /// False for records of positions that stayed masked at this step.
    #[serde(default = "yes")]
    pub committed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Commits in ascending position order.
    pub committed: Vec<Commit>,
    #[serde(default)]
    pub pdm: Vec<PdmRecord>,
    pub oracle_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceLine {
    Header(Box<TraceHeader>),
    Step(StepRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
}

impl DecodeTrace {
    pub fn new(config: DecodeConfig, schedule: StepSchedule, metadata: OracleMetadata) -> Self {
        Self {
            header: TraceHeader {
                schema: TRACE_SCHEMA.to_string(),
                label: config.label(),
                config,
                schedule,
                metadata,
            },
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.header.schedule.len
    }

    pub fn is_empty(&self) -> bool {
        self.header.schedule.len == 0
    }

    pub fn total_steps(&self) -> usize {
        self.header.schedule.steps
    }

    /// True when every scheduled step has been recorded.
    pub fn is_complete(&self) -> bool {
        self.steps.len() == self.header.schedule.steps
    }

    pub fn oracle_calls(&self) -> usize {
        self.steps.iter().map(|s| s.oracle_calls).sum()
    }

    /// Token committed at each position, `None` where still masked.
    pub fn committed_tokens(&self) -> Vec<Option<TokenId>> {
        let mut out = vec![None; self.len()];
        for c in self.steps.iter().flat_map(|s| &s.committed) {
            if let Some(slot) = out.get_mut(c.position) {
                *slot = Some(c.token);
            }
        }
        out
    }

    /// Step at which each position was committed.
    pub fn commit_steps(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.len()];
        for s in &self.steps {
            for c in &s.committed {
                if let Some(slot) = out.get_mut(c.position) {
                    *slot = Some(s.step);
                }
            }
        }
        out
    }

    pub fn pdm_records(&self) -> impl Iterator<Item = &PdmRecord> {
        self.steps.iter().flat_map(|s| &s.pdm)
    }

    /// Structural checks: supported schema, steps numbered 1, 2, ... with the
    /// scheduled commit counts, and every position committed at most once.
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.header.schema != TRACE_SCHEMA {
            return Err(TraceError::Schema {
                found: self.header.schema.clone(),
            });
        }
        let schedule = &self.header.schedule;
        if schedule.commit_counts.len() != schedule.steps
            || schedule.masked_targets.len() != schedule.steps + 1
        {
            return Err(TraceError::Invalid("schedule arrays disagree with step count".into()));
        }
        if self.steps.len() > schedule.steps {
            return Err(TraceError::Invalid(format!(
                "{} step records for a {}-step schedule",
                self.steps.len(),
                schedule.steps
            )));
        }
        let mut seen = vec![false; schedule.len];
        for (i, record) in self.steps.iter().enumerate() {
            if record.step != i + 1 {
                return Err(TraceError::Invalid(format!(
                    "step record {} is numbered {}",
                    i + 1,
                    record.step
                )));
            }
            if record.committed.len() != schedule.commits_at(record.step) {
                return Err(TraceError::Invalid(format!(
                    "step {} commits {} positions, schedule says {}",
                    record.step,
                    record.committed.len(),
                    schedule.commits_at(record.step)
                )));
            }
            for c in &record.committed {
                match seen.get_mut(c.position) {
                    None => {
                        return Err(TraceError::Invalid(format!("position {} out of range", c.position)))
                    }
                    Some(true) => {
                        return Err(TraceError::Invalid(format!("position {} committed twice", c.position)))
                    }
                    Some(slot) => *slot = true,
                }
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), TraceError> {
        let header = TraceLine::Header(Box::new(self.header.clone()));
        serde_json::to_writer(&mut out, &header).map_err(|source| TraceError::Json { line: 1, source })?;
        out.write_all(b"\n")?;
        for (i, step) in self.steps.iter().enumerate() {
            serde_json::to_writer(&mut out, &TraceLine::Step(step.clone()))
                .map_err(|source| TraceError::Json { line: i + 2, source })?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut header = None;
        let mut steps = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            // Check the schema tag before full decoding so that traces written
            // by a newer format report a schema error rather than a field error.
            if i == 0 {
                let raw: serde_json::Value =
                    serde_json::from_str(&line).map_err(|source| TraceError::Json { line: 1, source })?;
                match raw.get("schema").and_then(|s| s.as_str()) {
                    Some(TRACE_SCHEMA) => {}
                    Some(other) => {
                        return Err(TraceError::Schema {
                            found: other.to_string(),
                        })
                    }
                    None => return Err(TraceError::MissingHeader),
                }
            }
            let parsed: TraceLine =
                serde_json::from_str(&line).map_err(|source| TraceError::Json { line: i + 1, source })?;
            match parsed {
                TraceLine::Header(h) if i == 0 => header = Some(*h),
                TraceLine::Header(_) => return Err(TraceError::MisplacedHeader(i + 1)),
                TraceLine::Step(s) => steps.push(s),
            }
        }
        let trace = Self {
            header: header.ok_or(TraceError::MissingHeader)?,
            steps,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let file = File::create(path)?;
        self.write_jsonl(BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        Self::read_jsonl(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::build_schedule;

    fn trace() -> DecodeTrace {
        let cfg = DecodeConfig::new(4, 2);
        let mut t = DecodeTrace::new(cfg, build_schedule(4, 2).unwrap(), OracleMetadata::new(8, 0).unwrap());
        t.steps.push(StepRecord {
            step: 1,
            committed: vec![
                Commit { position: 0, token: 3, confidence: 0.9, penalized: 0.9 },
                Commit { position: 2, token: 5, confidence: 0.8, penalized: 0.7 },
            ],
            pdm: vec![PdmRecord { step: 1, position: 0, pdm: 0.1, committed: true }],
            oracle_calls: 2,
        });
        t
    }

    #[test]
    fn jsonl_round_trip() {
        let t = trace();
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(r#"{"record":"header","schema":"dift-trace/1""#));
        let back = DecodeTrace::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, t);
        assert!(!back.is_complete());
        assert_eq!(back.committed_tokens(), vec![Some(3), None, Some(5), None]);
        assert_eq!(back.commit_steps(), vec![Some(1), None, Some(1), None]);
    }

    #[test]
    fn rejects_other_schema() {
        let text = trace().to_jsonl().replace("dift-trace/1", "dift-trace/2");
        assert!(matches!(
            DecodeTrace::read_jsonl(text.as_bytes()),
            Err(TraceError::Schema { .. })
        ));
    }

    #[test]
    fn rejects_wrong_commit_count() {
        let mut t = trace();
        t.steps[0].committed.pop();
        let text = t.to_jsonl();
        assert!(matches!(DecodeTrace::read_jsonl(text.as_bytes()), Err(TraceError::Invalid(_))));
    }

    #[test]
    fn rejects_missing_header() {
        let text = trace().to_jsonl();
        let steps_only: String = text.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert!(DecodeTrace::read_jsonl(steps_only.as_bytes()).is_err());
        assert!(matches!(DecodeTrace::read_jsonl("".as_bytes()), Err(TraceError::MissingHeader)));
    }

    proptest::proptest! {
        #[test]
        fn scores_survive_jsonl_bit_exact(a in 0.0f64..=1.0, b in 0.0f64..=1.0, d in 0.0f64..=1.0) {
            let mut t = trace();
            t.steps[0].committed[0].confidence = a;
            t.steps[0].committed[0].penalized = b;
            t.steps[0].pdm.push(PdmRecord { step: 1, position: 0, pdm: d, committed: true });
            let back = DecodeTrace::read_jsonl(t.to_jsonl().as_bytes()).unwrap();
            proptest::prop_assert_eq!(back, t);
        }
    }
}
