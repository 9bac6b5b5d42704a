//! `dift analyze`: answer-step histograms and PDM curves from a trace directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use dift_core::instrument::{answer_histogram, pdm_curve, AnswerHistogram, CurvePoint};
use dift_core::DecodeTrace;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::svg;

pub const REPORT_SCHEMA: &str = "dift-report/1";
pub const DEFAULT_BUCKETS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub label: String,
    pub traces: usize,
    pub complete: usize,
    pub steps: usize,
    pub answer_histogram: AnswerHistogram,
    pub mean_answer_step: Option<f64>,
    pub mean_oracle_calls: f64,
    pub pdm_curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub traces: usize,
    pub buckets: usize,
    pub groups: Vec<GroupReport>,
}

/// Every `*.jsonl` file in `dir`, sorted by name.
fn trace_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("cannot read trace directory {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "jsonl") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_traces(dir: &Path) -> CliResult<Vec<DecodeTrace>> {
    trace_files(dir)
        .map_err(CliError::config)?
        .iter()
        .map(|path| {
            DecodeTrace::load(path)
                .map_err(|e| CliError::config(anyhow!("{}: {e}", path.display())))
        })
        .collect()
}

pub fn build_report(traces: Vec<DecodeTrace>, buckets: usize) -> Report {
    let total = traces.len();
    let mut groups: BTreeMap<String, Vec<DecodeTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry(t.header.label.clone()).or_default().push(t);
    }
    let groups = groups
        .into_iter()
        .map(|(label, traces)| {
            let histogram = answer_histogram(&traces, None);
            let calls: usize = traces.iter().map(DecodeTrace::oracle_calls).sum();
            GroupReport {
                label,
                traces: traces.len(),
                complete: traces.iter().filter(|t| t.is_complete()).count(),
                steps: traces.iter().map(DecodeTrace::total_steps).max().unwrap_or(0),
                mean_answer_step: histogram.mean_step(),
                answer_histogram: histogram,
                mean_oracle_calls: calls as f64 / traces.len() as f64,
                pdm_curve: pdm_curve(&traces, buckets),
            }
        })
        .collect();
    Report {
        schema: REPORT_SCHEMA,
        traces: total,
        buckets,
        groups,
    }
}

/// `<dir>/<stem>.<suffix>` next to the report file.
fn sibling(report: &Path, suffix: &str) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}.{suffix}"))
}

fn write_histogram_csv(report: &Report, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "answer_step", "count"])?;
    for g in &report.groups {
        for (step, count) in &g.answer_histogram.bins {
            w.write_record([g.label.clone(), step.to_string(), count.to_string()])?;
        }
        if g.answer_histogram.undetected > 0 {
            w.write_record([g.label.clone(), String::new(), g.answer_histogram.undetected.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_curve_csv(report: &Report, path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "relative_step", "mean_pdm", "count"])?;
    for g in &report.groups {
        for p in &g.pdm_curve {
            w.write_record([
                g.label.clone(),
                p.relative_step.to_string(),
                p.mean_pdm.to_string(),
                p.count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_outputs(report: &Report, report_path: &Path, svg_path: Option<&Path>) -> anyhow::Result<()> {
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(report_path, json).with_context(|| format!("cannot write {}", report_path.display()))?;
    write_histogram_csv(report, &sibling(report_path, "answer_steps.csv"))?;
    write_curve_csv(report, &sibling(report_path, "pdm_curve.csv"))?;
    if let Some(path) = svg_path {
        fs::write(path, svg::render(report)).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

pub fn cmd_analyze(traces: &Path, report_path: &Path, svg_path: Option<&Path>, buckets: usize) -> CliResult<()> {
    if buckets == 0 {
        return Err(CliError::config(anyhow!("--buckets must be at least 1")));
    }
    let traces = load_traces(traces)?;
    log::info!("analyzing {} traces", traces.len());
    let report = build_report(traces, buckets);
    write_outputs(&report, report_path, svg_path).map_err(CliError::config)
}
