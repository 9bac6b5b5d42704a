//! Aggregations over many traces: PDM-vs-progress curves and answer-step
//! histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::answer::{answer_step, AnswerPattern};
use super::trace::DecodeTrace;
use crate::exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Bucket centre on the relative-progress axis i/K.
    pub relative_step: f64,
    pub mean_pdm: f64,
    pub count: usize,
}

/// Bucket of relative step `step / steps` among `buckets` equal-width
/// buckets over (0, 1]; integer arithmetic so exact edges land consistently.
fn bucket_of(step: usize, steps: usize, buckets: usize) -> usize {
    let b = (step * buckets).div_ceil(steps);
    b.clamp(1, buckets) - 1
}

/// Mean PDM of commit-time records per relative-step bucket. Records from
/// positions that were not committed at that step are left out; empty
/// buckets are omitted.
pub fn pdm_curve(traces: &[DecodeTrace], buckets: usize) -> Vec<CurvePoint> {
    let buckets = buckets.max(1);
    let partials = exec::map(traces, |trace| {
        let steps = trace.total_steps();
        let mut sums = vec![(0.0f64, 0usize); buckets];
        for r in trace.pdm_records().filter(|r| r.committed) {
            let slot = &mut sums[bucket_of(r.step, steps, buckets)];
            slot.0 += r.pdm;
            slot.1 += 1;
        }
        sums
    });
    let mut totals = vec![(0.0f64, 0usize); buckets];
    for partial in partials {
        for (t, p) in totals.iter_mut().zip(partial) {
            t.0 += p.0;
            t.1 += p.1;
        }
    }
    totals
        .into_iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(b, (sum, n))| CurvePoint {
            relative_step: (b as f64 + 0.5) / buckets as f64,
            mean_pdm: sum / n as f64,
            count: n,
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerHistogram {
    /// Answer step -> number of traces.
    pub bins: BTreeMap<usize, usize>,
    pub undetected: usize,
}

impl AnswerHistogram {
    pub fn detected(&self) -> usize {
        self.bins.values().sum()
    }

    pub fn mean_step(&self) -> Option<f64> {
        let n = self.detected();
        (n > 0).then(|| self.bins.iter().map(|(s, c)| (s * c) as f64).sum::<f64>() / n as f64)
    }

    pub fn record(&mut self, step: Option<usize>) {
        match step {
            Some(s) => *self.bins.entry(s).or_default() += 1,
            None => self.undetected += 1,
        }
    }
}

/// Answer step of each trace under `pattern`, or under the trace's own
/// configured pattern when `pattern` is `None`. Traces without any pattern
/// count as undetected.
pub fn answer_steps(traces: &[DecodeTrace], pattern: Option<&AnswerPattern>) -> Vec<Option<usize>> {
    exec::map(traces, |t| {
        let p = pattern.or(t.header.config.answer_pattern.as_ref())?;
        answer_step(t, p, &t.header.metadata)
    })
}

pub fn answer_histogram(traces: &[DecodeTrace], pattern: Option<&AnswerPattern>) -> AnswerHistogram {
    let mut hist = AnswerHistogram::default();
    for step in answer_steps(traces, pattern) {
        hist.record(step);
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instrument::trace::{Commit, PdmRecord, StepRecord};
    use crate::oracle::OracleMetadata;
    use crate::types::{build_schedule, DecodeConfig};

    fn trace_with_pdm(len: usize, steps: usize, value: f64) -> DecodeTrace {
        let schedule = build_schedule(len, steps).unwrap();
        let mut t = DecodeTrace::new(DecodeConfig::new(len, steps), schedule.clone(), OracleMetadata::new(4, 0).unwrap());
        let mut next = 0;
        for step in 1..=steps {
            let committed: Vec<Commit> = (0..schedule.commits_at(step))
                .map(|k| Commit { position: next + k, token: 1, confidence: 1.0, penalized: 1.0 })
                .collect();
            next += committed.len();
            let pdm = committed
                .iter()
                .map(|c| PdmRecord { step, position: c.position, pdm: value, committed: true })
                .collect();
            t.steps.push(StepRecord { step, committed, pdm, oracle_calls: 2 });
        }
        t
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(bucket_of(1, 4, 4), 0);
        assert_eq!(bucket_of(4, 4, 4), 3);
        assert_eq!(bucket_of(1, 32, 16), 0);
        assert_eq!(bucket_of(2, 32, 16), 0);
        assert_eq!(bucket_of(3, 32, 16), 1);
        assert_eq!(bucket_of(32, 32, 16), 15);
        assert_eq!(bucket_of(1, 4, 16), 3);
    }

    #[test]
    fn constant_curve() {
        let curve = pdm_curve(&[trace_with_pdm(16, 8, 0.5)], 4);
        assert_eq!(curve.len(), 4);
        assert!(curve.iter().all(|p| p.mean_pdm == 0.5));
        assert_eq!(curve[0].relative_step, 0.125);
    }

    #[test]
    fn two_traces_average() {
        let traces = [trace_with_pdm(16, 8, 0.2), trace_with_pdm(16, 8, 0.4)];
        for p in pdm_curve(&traces, 16) {
            assert!((p.mean_pdm - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn no_pdm_no_curve() {
        let mut t = trace_with_pdm(8, 4, 0.5);
        t.steps.iter_mut().for_each(|s| s.pdm.clear());
        assert!(pdm_curve(&[t], 16).is_empty());
    }

    #[test]
    fn uncommitted_records_are_excluded() {
        let mut t = trace_with_pdm(8, 4, 0.5);
        t.steps[0].pdm.push(PdmRecord { step: 1, position: 7, pdm: 1.0, committed: false });
        let curve = pdm_curve(&[t], 4);
        assert_eq!(curve[0].mean_pdm, 0.5);
    }

    #[test]
    fn histogram_counts() {
        let mut h = AnswerHistogram::default();
        for s in [Some(1), Some(1), Some(5), None] {
            h.record(s);
        }
        assert_eq!(h.bins.get(&1), Some(&2));
        assert_eq!(h.detected(), 3);
        assert_eq!(h.undetected, 1);
        assert!((h.mean_step().unwrap() - 7.0 / 3.0).abs() < 1e-12);
    }
}
