//! Detecting the step at which the answer gets committed.

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::trace::DecodeTrace;
use crate::oracle::OracleMetadata;
use crate::types::{ConfigError, TokenId};

/// Rendered in place of still-masked positions when matching patterns.
pub const MASK_GLYPH: char = '\u{FFFD}';

fn default_fill_fraction() -> f64 {
    0.75
}

/// How to recognise the answer in a partially committed response.
///
/// Tokens are rendered through the oracle's vocabulary map when it has one and
/// as `<id>` otherwise, so patterns can be written against either form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnswerPattern {
    /// The first step at which the regex matches the committed text.
    TokenMatch { pattern: String },
    /// The first step at which at least `fill_fraction` of the `region_len`
    /// positions following a committed `marker` are committed.
    MarkerRegion {
        marker: String,
        region_len: usize,
        #[serde(default = "default_fill_fraction")]
        fill_fraction: f64,
    },
}

impl AnswerPattern {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            Self::TokenMatch { pattern } => Regex::new(pattern)
                .map(|_| ())
                .map_err(|e| ConfigError::Invalid(format!("answer pattern: {e}"))),
            Self::MarkerRegion {
                marker,
                region_len,
                fill_fraction,
            } => {
                if marker.trim().is_empty() {
                    return Err(ConfigError::Invalid("answer marker must not be blank".into()));
                }
                if *region_len == 0 {
                    return Err(ConfigError::Invalid("answer region must be non-empty".into()));
                }
                if !(*fill_fraction > 0.0 && *fill_fraction <= 1.0) {
                    return Err(ConfigError::OutOfRange {
                        name: "fill_fraction",
                        value: *fill_fraction,
                        range: "(0, 1]",
                    });
                }
                Ok(())
            }
        }
    }
}

/// Concatenated rendering of the response, masked slots shown as [`MASK_GLYPH`].
pub fn render_text(tokens: &[Option<TokenId>], meta: &OracleMetadata) -> String {
    tokens
        .iter()
        .map(|t| match t {
            Some(id) => meta.render(*id),
            None => MASK_GLYPH.to_string(),
        })
        .collect()
}

/// Index just past the first committed run of tokens that spells `marker`.
fn find_marker(tokens: &[Option<TokenId>], marker: &str, meta: &OracleMetadata) -> Option<usize> {
    let marker = marker.trim();
    for start in 0..tokens.len() {
        let mut text = String::new();
        for (end, token) in tokens.iter().enumerate().skip(start) {
            let Some(id) = token else { break };
            text.push_str(&meta.render(*id));
            let trimmed = text.trim();
            if trimmed == marker {
                return Some(end + 1);
            }
            if !marker.starts_with(trimmed) {
                break;
            }
        }
    }
    None
}

/// First step (1-based) at which `pattern` is satisfied by the committed
/// tokens, or `None` if it never is. Works on partial traces too.
pub fn answer_step(trace: &DecodeTrace, pattern: &AnswerPattern, meta: &OracleMetadata) -> Option<usize> {
    let regex = match pattern {
        AnswerPattern::TokenMatch { pattern } => Some(Regex::new(pattern).ok()?),
        AnswerPattern::MarkerRegion { .. } => None,
    };
    let mut tokens: Vec<Option<TokenId>> = vec![None; trace.len()];
    for record in &trace.steps {
        for c in &record.committed {
            if let Some(slot) = tokens.get_mut(c.position) {
                *slot = Some(c.token);
            }
        }
        let hit = match pattern {
            AnswerPattern::TokenMatch { .. } => regex
                .as_ref()
                .is_some_and(|re| re.is_match(&render_text(&tokens, meta))),
            AnswerPattern::MarkerRegion {
                marker,
                region_len,
                fill_fraction,
            } => find_marker(&tokens, marker, meta).is_some_and(|start| {
                let end = (start + region_len).min(tokens.len());
                if start >= end {
                    return false;
                }
                let filled = tokens[start..end].iter().filter(|t| t.is_some()).count();
                filled as f64 >= fill_fraction * (end - start) as f64 - 1e-9
            }),
        };
        if hit {
            return Some(record.step);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::trace::{Commit, StepRecord};
    use crate::types::{build_schedule, DecodeConfig, StepSchedule};

    /// Build a trace from (position, token, step) triples, bypassing the schedule.
    fn trace_from(len: usize, steps: usize, commits: &[(usize, TokenId, usize)]) -> DecodeTrace {
        let mut counts = vec![0; steps];
        for &(_, _, s) in commits {
            counts[s - 1] += 1;
        }
        let mut masked = vec![len];
        for c in &counts {
            masked.push(masked.last().unwrap() - c);
        }
        let schedule = StepSchedule {
            len,
            steps,
            times: build_schedule(len, steps).unwrap().times,
            masked_targets: masked,
            commit_counts: counts,
        };
        let mut t = DecodeTrace::new(DecodeConfig::new(len, steps), schedule, meta());
        for step in 1..=steps {
            let committed = commits
                .iter()
                .filter(|c| c.2 == step)
                .map(|&(position, token, _)| Commit { position, token, confidence: 1.0, penalized: 1.0 })
                .collect();
            t.steps.push(StepRecord { step, committed, pdm: vec![], oracle_calls: 1 });
        }
        t
    }

    fn meta() -> OracleMetadata {
        let words: Vec<String> = ["[M]", "the", " answer", " is", " B", " C", "Answer", ":", " x"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        OracleMetadata::new(words.len(), 0).unwrap().with_tokens(&words)
    }

    #[test]
    fn token_match_fires_on_commit_step() {
        let t = trace_from(4, 6, &[(0, 1, 1), (1, 2, 2), (2, 3, 3), (3, 4, 5)]);
        let p = AnswerPattern::TokenMatch { pattern: r"answer is ([A-D])".into() };
        assert_eq!(answer_step(&t, &p, &meta()), Some(5));
    }

    #[test]
    fn never_committed_is_none() {
        let t = trace_from(4, 4, &[(0, 1, 1), (1, 2, 2), (2, 3, 3), (3, 5, 4)]);
        let p = AnswerPattern::TokenMatch { pattern: r"is B".into() };
        assert_eq!(answer_step(&t, &p, &meta()), None);
    }

    #[test]
    fn id_rendering_without_vocabulary() {
        let t = trace_from(3, 3, &[(0, 6, 1), (2, 4, 2), (1, 7, 3)]);
        let bare = OracleMetadata::new(9, 0).unwrap();
        let p = AnswerPattern::TokenMatch { pattern: "<6><7><4>".into() };
        assert_eq!(answer_step(&t, &p, &bare), Some(3));
    }

    /// Marker at position 0, committed at step 1; region positions 1..=8
    /// committed on the given steps.
    fn region_trace_with(fills: [usize; 8]) -> DecodeTrace {
        let mut commits = vec![(0, 6, 1)];
        commits.extend(fills.iter().enumerate().map(|(i, &s)| (i + 1, 8, s)));
        trace_from(9, 9, &commits)
    }

    fn region_trace() -> DecodeTrace {
        region_trace_with([2, 2, 3, 4, 4, 4, 7, 9])
    }

    #[test]
    fn marker_region_six_of_eight() {
        let p = AnswerPattern::MarkerRegion { marker: "Answer".into(), region_len: 8, fill_fraction: 0.75 };
        assert_eq!(answer_step(&region_trace(), &p, &meta()), Some(4));
        // With fills on 2,2,3,4,4,6,7,9 only five are in by step 4; the sixth lands at 6.
        assert_eq!(answer_step(&region_trace_with([2, 2, 3, 4, 4, 6, 7, 9]), &p, &meta()), Some(6));
    }

    #[test]
    fn marker_region_monotone_in_fraction() {
        let mut last = 0;
        for f in [0.1, 0.25, 0.5, 0.75, 0.8, 0.9, 1.0] {
            let p = AnswerPattern::MarkerRegion { marker: "Answer".into(), region_len: 8, fill_fraction: f };
            let step = answer_step(&region_trace(), &p, &meta()).unwrap();
            assert!(step >= last, "fraction {f}");
            last = step;
        }
        assert_eq!(last, 9);
    }

    #[test]
    fn multi_token_marker() {
        let t = trace_from(4, 3, &[(0, 6, 1), (1, 7, 2), (2, 8, 2), (3, 8, 3)]);
        let p = AnswerPattern::MarkerRegion { marker: "Answer:".into(), region_len: 2, fill_fraction: 0.5 };
        assert_eq!(answer_step(&t, &p, &meta()), Some(2));
    }

    #[test]
    fn marker_never_committed() {
        let t = trace_from(3, 3, &[(0, 1, 1), (1, 2, 2), (2, 3, 3)]);
        let p = AnswerPattern::MarkerRegion { marker: "Answer".into(), region_len: 2, fill_fraction: 0.75 };
        assert_eq!(answer_step(&t, &p, &meta()), None);
    }

    #[test]
    fn pattern_validation() {
        assert!(AnswerPattern::TokenMatch { pattern: "(".into() }.validate().is_err());
        let bad = AnswerPattern::MarkerRegion { marker: "A".into(), region_len: 4, fill_fraction: 0.0 };
        assert!(bad.validate().is_err());
        let json = r#"{"mode": "marker_region", "marker": "Answer:", "region_len": 8}"#;
        let p: AnswerPattern = serde_json::from_str(json).unwrap();
        assert_eq!(
            p,
            AnswerPattern::MarkerRegion { marker: "Answer:".into(), region_len: 8, fill_fraction: 0.75 }
        );
    }
}
