//! `dift run`: decode campaigns over seeds and repetitions.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use dift_core::instrument::answer_steps;
use dift_core::oracle::OracleSpec;
use dift_core::{decode, exec, DecodeConfig, DecodeError, DecodeResult, DecodeTrace, TokenSequence};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};

/// One decode of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub seed: u64,
    pub repetition: usize,
}

impl Cell {
    pub fn trace_name(&self, label: &str) -> String {
        format!("{label}-s{}-r{}.jsonl", self.seed, self.repetition)
    }
}

pub fn cells(seeds: &[u64], repetitions: usize) -> Vec<Cell> {
    seeds
        .iter()
        .flat_map(|&seed| (0..repetitions).map(move |repetition| Cell { seed, repetition }))
        .collect()
}

/// Outcome of one cell. Decode failures keep whatever trace was recorded.
#[derive(Debug)]
pub enum CellOutcome {
    Done(DecodeResult),
    Failed { error: CliError, partial: Option<DecodeTrace> },
}

/// Build the oracle for `cell` and decode from a fully masked response.
pub fn run_cell(spec: &OracleSpec, config: &DecodeConfig, cell: Cell) -> CellOutcome {
    let failed = |error, partial| CellOutcome::Failed { error, partial };
    let oracle = match spec.build(config.generation_length, cell.seed) {
        Ok(o) => o,
        Err(e) if e.is_transport() => return failed(CliError::oracle(e), None),
        Err(e) => return failed(CliError::config(e), None),
    };
    let meta = match oracle.metadata() {
        Ok(m) => m,
        Err(e) => return failed(CliError::oracle(e), None),
    };
    let prompt = match TokenSequence::fully_masked(config.generation_length, meta.mask_token_id) {
        Ok(p) => p,
        Err(e) => return failed(CliError::config(e), None),
    };
    let mut config = config.clone();
    config.seed = cell.seed;
    match decode(oracle.as_ref(), &prompt, &config) {
        Ok(result) => CellOutcome::Done(result),
        Err(e) => {
            let partial = e.partial_trace().cloned();
            let error = match e {
                DecodeError::Config(_) => CliError::config(e),
                _ => CliError::oracle(e),
            };
            failed(error, partial)
        }
    }
}

/// Run every cell, in parallel when `parallel` is set and compiled in.
pub fn run_cells(spec: &OracleSpec, config: &DecodeConfig, cells: &[Cell], parallel: bool) -> Vec<CellOutcome> {
    if parallel {
        exec::map(cells, |&c| run_cell(spec, config, c))
    } else {
        exec::map_sequential(cells, |&c| run_cell(spec, config, c))
    }
}

/// Campaign summary printed by `dift run`. Everything except `label`,
/// `trace_dir` and the wall-time fields is a pure function of the decoded
/// tokens, so two runs with the same outcomes agree on those fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub label: String,
    pub trace_dir: PathBuf,
    pub runs: usize,
    pub answers_detected: usize,
    pub mean_answer_step: Option<f64>,
    pub mean_pdm: Option<f64>,
    pub pdm_records: usize,
    pub oracle_calls: usize,
    pub mean_oracle_calls: f64,
    /// Digest of every decoded response, in cell order.
    pub outputs_sha256: String,
    pub wall_time_s: f64,
    pub mean_wall_time_s: f64,
}

pub fn summarize(label: &str, trace_dir: &Path, results: &[DecodeResult]) -> Summary {
    let traces: Vec<DecodeTrace> = results.iter().map(|r| r.trace.clone()).collect();
    let steps: Vec<usize> = answer_steps(&traces, None).into_iter().flatten().collect();
    let pdm: Vec<f64> = traces
        .iter()
        .flat_map(|t| t.pdm_records().filter(|r| r.committed).map(|r| r.pdm))
        .collect();
    let mut hasher = Sha256::new();
    for r in results {
        for t in &r.final_tokens {
            hasher.update(t.to_le_bytes());
        }
        hasher.update(u32::MAX.to_le_bytes());
    }
    let runs = results.len();
    let oracle_calls: usize = results.iter().map(|r| r.oracle_calls).sum();
    let wall_time_s: f64 = results.iter().map(|r| r.wall_time.as_secs_f64()).sum();
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    Summary {
        label: label.to_string(),
        trace_dir: trace_dir.to_path_buf(),
        runs,
        answers_detected: steps.len(),
        mean_answer_step: (!steps.is_empty()).then(|| mean(steps.iter().sum::<usize>() as f64, steps.len())),
        mean_pdm: (!pdm.is_empty()).then(|| mean(pdm.iter().sum(), pdm.len())),
        pdm_records: pdm.len(),
        oracle_calls,
        mean_oracle_calls: mean(oracle_calls as f64, runs),
        outputs_sha256: hasher.finalize().iter().map(|b| format!("{b:02x}")).collect(),
        wall_time_s,
        mean_wall_time_s: mean(wall_time_s, runs),
    }
}

fn save(trace: &DecodeTrace, path: &Path) -> CliResult<()> {
    trace
        .save(path)
        .with_context(|| format!("cannot write trace {}", path.display()))
        .map_err(CliError::config)
}

pub fn cmd_run(config_path: &Path, trace_dir: Option<&Path>) -> CliResult<()> {
    let loaded = LoadedConfig::load(config_path)?;
    let cfg = &loaded.config;
    let dir = loaded.trace_dir(trace_dir);
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create trace directory {}", dir.display()))
        .map_err(CliError::config)?;

    let label = cfg.decode.label();
    let cells = cells(&cfg.seeds, cfg.repetitions);
    log::info!("running {} decodes of {label}", cells.len());
    let outcomes = run_cells(&cfg.oracle, &cfg.decode, &cells, true);

    let mut results = Vec::with_capacity(outcomes.len());
    let mut first_error = None;
    for (cell, outcome) in cells.iter().zip(outcomes) {
        let path = dir.join(cell.trace_name(&label));
        match outcome {
            CellOutcome::Done(result) => {
                save(&result.trace, &path)?;
                results.push(result);
            }
            CellOutcome::Failed { error, partial } => {
                log::error!("seed {} repetition {}: {error}", cell.seed, cell.repetition);
                if let Some(trace) = partial {
                    save(&trace, &path)?;
                }
                first_error.get_or_insert(error);
            }
        }
    }
    if let Some(error) = first_error {
        return Err(error);
    }

    let summary = summarize(&label, &dir, &results);
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::config(anyhow!(e)))?;
    println!("{text}");
    Ok(())
}
