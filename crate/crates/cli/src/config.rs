//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use dift_core::oracle::OracleSpec;
use dift_core::{build_schedule, DecodeConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const EXPERIMENT_SCHEMA: &str = "dift-experiment/1";

/// Above this guidance scale the condition-dropped pass starts to dominate.
pub const S_VRG_WARN_ABOVE: f64 = 2.0;

fn one() -> usize {
    1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub decode: DecodeConfig,
    pub oracle: OracleSpec,
    /// Decodes per seed.
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Relative paths are taken from the config file's directory.
    #[serde(default)]
    pub trace_dir: Option<PathBuf>,
    #[serde(default)]
    pub bench: Option<BenchSpec>,
}

/// Extra axes for `dift bench`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    /// (generation length, steps) cells; empty means the decode section's.
    #[serde(default)]
    pub grid: Vec<(usize, usize)>,
    /// Guidance/penalty sweep: one row per (gamma, s_vrg) pair.
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default)]
    pub s_vrgs: Vec<f64>,
}

/// A config together with the directory it was loaded from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))
            .map_err(CliError::config)?;
        let config = ExperimentConfig::parse(&text)
            .with_context(|| format!("invalid config {}", path.display()))
            .map_err(CliError::config)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    /// Trace directory: the override if given, else the configured one
    /// relative to the config file, else `traces/` next to it.
    pub fn trace_dir(&self, override_dir: Option<&Path>) -> PathBuf {
        match (override_dir, &self.config.trace_dir) {
            (Some(dir), _) => dir.to_path_buf(),
            (None, Some(dir)) => self.base_dir.join(dir),
            (None, None) => self.base_dir.join("traces"),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema != EXPERIMENT_SCHEMA {
            bail!("unsupported config schema {:?}, expected {EXPERIMENT_SCHEMA:?}", self.schema);
        }
        if self.repetitions == 0 {
            bail!("repetitions must be at least 1");
        }
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        self.decode.validate()?;
        self.check_oracle(self.decode.generation_length)?;
        warn_scale(self.decode.s_vrg);

        if let Some(bench) = &self.bench {
            for &(len, steps) in &bench.grid {
                build_schedule(len, steps).map_err(|e| anyhow!("bench grid cell ({len}, {steps}): {e}"))?;
                self.check_oracle(len)?;
            }
            for &g in &bench.gammas {
                if !(0.0..=1.0).contains(&g) {
                    bail!("bench gamma {g} outside [0, 1]");
                }
            }
            for &s in &bench.s_vrgs {
                if !(s.is_finite() && s >= 0.0) {
                    bail!("bench s_vrg {s} must be finite and non-negative");
                }
                warn_scale(s);
            }
            if bench.gammas.is_empty() != bench.s_vrgs.is_empty() {
                bail!("bench sweep needs both gammas and s_vrgs");
            }
        }
        Ok(())
    }

    /// In-process oracles are built once to catch bad parameters up front;
    /// remote ones are only checked for a usable URL.
    fn check_oracle(&self, len: usize) -> anyhow::Result<()> {
        match &self.oracle {
            OracleSpec::Remote { url, .. } => {
                if !(url.starts_with("http://") || url.starts_with("https://")) {
                    bail!("remote oracle url {url:?} must start with http:// or https://");
                }
            }
            spec => {
                for &seed in &self.seeds {
                    spec.build(len, seed).map_err(|e| anyhow!("oracle: {e}"))?;
                }
            }
        }
        Ok(())
    }
}

fn warn_scale(s: f64) {
    if s > S_VRG_WARN_ABOVE {
        log::warn!("s_vrg = {s} is above {S_VRG_WARN_ABOVE}; large guidance can drown out the text condition");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema": "dift-experiment/1",
        "decode": {"generation_length": 16, "steps": 4},
        "oracle": {"kind": "mixture"}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.repetitions, 1);
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.decode.gamma, 0.5);
        assert!(c.bench.is_none());
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = MINIMAL.replace("\"steps\": 4", "\"steps\": 4, \"temperature\": 1.0");
        assert!(ExperimentConfig::parse(&text).is_err());
        let text = MINIMAL.replace("\"schema\"", "\"extra\": 1, \"schema\"");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn schema_version_checked() {
        let text = MINIMAL.replace("dift-experiment/1", "dift-experiment/9");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("schema"));
    }

    #[test]
    fn zero_repetitions_rejected() {
        let text = MINIMAL.replace("\"schema\"", "\"repetitions\": 0, \"schema\"");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn unresolvable_oracle_rejected() {
        let text = MINIMAL.replace(r#"{"kind": "mixture"}"#, r#"{"kind": "template", "vocab_size": 2}"#);
        assert!(ExperimentConfig::parse(&text).is_err());
        let text = MINIMAL.replace(r#"{"kind": "mixture"}"#, r#"{"kind": "remote", "url": "localhost:1"}"#);
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn bench_sweep_needs_both_axes() {
        let text = MINIMAL.replace("\"schema\"", "\"bench\": {\"gammas\": [0.5]}, \"schema\"");
        assert!(ExperimentConfig::parse(&text).is_err());
        let text = MINIMAL.replace("\"schema\"", "\"bench\": {\"grid\": [[64, 0]]}, \"schema\"");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn trace_dir_resolution() {
        let loaded = LoadedConfig {
            config: ExperimentConfig::parse(MINIMAL).unwrap(),
            base_dir: PathBuf::from("exp"),
        };
        assert_eq!(loaded.trace_dir(None), PathBuf::from("exp/traces"));
        assert_eq!(loaded.trace_dir(Some(Path::new("out"))), PathBuf::from("out"));
    }
}
