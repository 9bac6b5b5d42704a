//! `dift toy-serve`: host an in-process oracle behind the HTTP protocol.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use dift_core::oracle::OracleSpec;
use dift_core::remote;

use crate::error::{CliError, CliResult};

/// Inline JSON (starting with `{`) or a path to a JSON file.
pub fn parse_spec(arg: &str) -> anyhow::Result<OracleSpec> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(Path::new(arg)).with_context(|| format!("cannot read oracle spec {arg}"))?
    };
    let spec: OracleSpec = serde_json::from_str(&text).context("invalid oracle spec")?;
    if spec.is_remote() {
        bail!("toy-serve hosts in-process oracles only");
    }
    Ok(spec)
}

pub fn cmd_toy_serve(host: IpAddr, port: u16, oracle: &str, len: usize, seed: u64) -> CliResult<()> {
    let spec = parse_spec(oracle).map_err(CliError::config)?;
    let oracle = spec
        .build(len, seed)
        .map_err(|e| CliError::config(anyhow!("oracle: {e}")))?;
    let handle = remote::spawn(Arc::from(oracle), SocketAddr::new(host, port))
        .with_context(|| format!("cannot bind {host}:{port}"))
        .map_err(CliError::config)?;
    // First stdout line is the address, so callers that asked for port 0 can find it.
    let mut stdout = std::io::stdout();
    let _ = writeln!(stdout, "listening on {}", handle.url());
    let _ = stdout.flush();
    handle.wait().context("server stopped").map_err(CliError::config)
}
