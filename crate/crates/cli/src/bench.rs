//! `dift bench`: wall time and oracle calls for baseline, PSP, VRG and both,
//! plus an optional (gamma, s_vrg) sweep.

use std::path::Path;

use anyhow::anyhow;
use dift_core::DecodeConfig;
use serde::Serialize;

use crate::config::{ExperimentConfig, LoadedConfig};
use crate::error::{CliError, CliResult};
use crate::run::{cells, run_cells, CellOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Method,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub kind: RowKind,
    pub method: String,
    pub generation_length: usize,
    pub steps: usize,
    pub gamma: Option<f64>,
    pub s_vrg: Option<f64>,
    pub runs: usize,
    pub mean_wall_time_ms: f64,
    pub mean_oracle_calls: f64,
}

/// The four configurations compared at every grid cell. PDM is switched off
/// so the unconditional pass is only paid for guidance.
fn methods(base: &DecodeConfig, len: usize, steps: usize) -> Vec<(&'static str, DecodeConfig)> {
    let mut plain = base.clone();
    plain.generation_length = len;
    plain.steps = steps;
    plain.pdm_enabled = false;
    plain.psp_enabled = false;
    plain.vrg_enabled = false;
    let with = |psp: bool, vrg: bool| {
        let mut c = plain.clone();
        c.psp_enabled = psp;
        c.vrg_enabled = vrg;
        c
    };
    vec![
        ("baseline", with(false, false)),
        ("psp", with(true, false)),
        ("vrg", with(false, true)),
        ("psp+vrg", with(true, true)),
    ]
}

fn measure(cfg: &ExperimentConfig, decode: &DecodeConfig) -> CliResult<(usize, f64, f64)> {
    let cells = cells(&cfg.seeds, cfg.repetitions);
    // Sequential so that per-decode wall time is not shared with other decodes.
    let outcomes = run_cells(&cfg.oracle, decode, &cells, false);
    let mut wall = 0.0;
    let mut calls = 0usize;
    for outcome in outcomes {
        match outcome {
            CellOutcome::Done(r) => {
                wall += r.wall_time.as_secs_f64() * 1e3;
                calls += r.oracle_calls;
            }
            CellOutcome::Failed { error, .. } => return Err(error),
        }
    }
    let n = cells.len();
    Ok((n, wall / n as f64, calls as f64 / n as f64))
}

pub fn bench_rows(cfg: &ExperimentConfig) -> CliResult<Vec<BenchRow>> {
    let sweep = cfg.bench.clone().unwrap_or_default();
    let grid = if sweep.grid.is_empty() {
        vec![(cfg.decode.generation_length, cfg.decode.steps)]
    } else {
        sweep.grid.clone()
    };
    let mut rows = Vec::new();
    for &(len, steps) in &grid {
        let all = methods(&cfg.decode, len, steps);
        for (name, decode) in &all {
            log::info!("bench {name} at L={len}, K={steps}");
            let (runs, wall, calls) = measure(cfg, decode)?;
            rows.push(BenchRow {
                kind: RowKind::Method,
                method: name.to_string(),
                generation_length: len,
                steps,
                gamma: decode.psp_enabled.then_some(decode.gamma),
                s_vrg: decode.vrg_enabled.then_some(decode.s_vrg),
                runs,
                mean_wall_time_ms: wall,
                mean_oracle_calls: calls,
            });
        }
        let both = &all[3].1;
        for &gamma in &sweep.gammas {
            for &s_vrg in &sweep.s_vrgs {
                let mut decode = both.clone();
                decode.gamma = gamma;
                decode.s_vrg = s_vrg;
                let (runs, wall, calls) = measure(cfg, &decode)?;
                rows.push(BenchRow {
                    kind: RowKind::Sweep,
                    method: "psp+vrg".into(),
                    generation_length: len,
                    steps,
                    gamma: Some(gamma),
                    s_vrg: Some(s_vrg),
                    runs,
                    mean_wall_time_ms: wall,
                    mean_oracle_calls: calls,
                });
            }
        }
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v}"))
}

pub fn format_table(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:<7} {:<9} {:>5} {:>5} {:>6} {:>6} {:>5} {:>12} {:>10}\n",
        "kind", "method", "L", "K", "gamma", "s_vrg", "runs", "wall_ms", "calls"
    );
    for r in rows {
        let kind = match r.kind {
            RowKind::Method => "method",
            RowKind::Sweep => "sweep",
        };
        out.push_str(&format!(
            "{:<7} {:<9} {:>5} {:>5} {:>6} {:>6} {:>5} {:>12.3} {:>10.1}\n",
            kind,
            r.method,
            r.generation_length,
            r.steps,
            opt(r.gamma),
            opt(r.s_vrg),
            r.runs,
            r.mean_wall_time_ms,
            r.mean_oracle_calls
        ));
    }
    out
}

pub fn cmd_bench(config_path: &Path, json: bool) -> CliResult<()> {
    let loaded = LoadedConfig::load(config_path)?;
    let rows = bench_rows(&loaded.config)?;
    if json {
        let text = serde_json::to_string_pretty(&rows).map_err(|e| CliError::config(anyhow!(e)))?;
        println!("{text}");
    } else {
        print!("{}", format_table(&rows));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            r#"{{
                "schema": "dift-experiment/1",
                "decode": {{"generation_length": 16, "steps": 8, "pdm_enabled": true}},
                "oracle": {{"kind": "mixture"}}
                {extra}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn four_methods_with_call_accounting() {
        let rows = bench_rows(&config("")).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(names, ["baseline", "psp", "vrg", "psp+vrg"]);
        let calls: Vec<f64> = rows.iter().map(|r| r.mean_oracle_calls).collect();
        assert_eq!(calls, [8.0, 8.0, 16.0, 16.0]);
    }

    #[test]
    fn sweep_emits_one_row_per_pair() {
        let rows = bench_rows(&config(
            r#", "bench": {"grid": [[8, 4], [16, 8]], "gammas": [0.0, 0.5, 1.0], "s_vrgs": [0.5, 1.0]}"#,
        ))
        .unwrap();
        assert_eq!(rows.len(), 2 * (4 + 6));
        let sweep: Vec<&BenchRow> = rows.iter().filter(|r| r.kind == RowKind::Sweep).collect();
        assert_eq!(sweep.len(), 12);
        assert!(sweep.iter().all(|r| r.mean_oracle_calls == 2.0 * r.steps as f64));
        let table = format_table(&rows);
        assert_eq!(table.lines().count(), rows.len() + 1);
    }
}
