//! `dift`: decode campaigns, trace analysis and benchmarks for masked
//! diffusion decoding.

mod analyze;
mod bench;
mod config;
mod error;
mod run;
mod serve;
mod svg;

use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dift", version, about = "Masked diffusion decoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a decode campaign and write one JSONL trace per decode.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's trace directory.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Summarize a directory of traces into JSON, CSV and optionally SVG.
    Analyze {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Relative-step buckets for the PDM curve.
        #[arg(long, default_value_t = analyze::DEFAULT_BUCKETS)]
        buckets: usize,
    },
    /// Compare wall time and oracle calls of baseline, PSP, VRG and both.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Print rows as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Serve a toy oracle over HTTP.
    ToyServe {
        #[arg(long)]
        port: u16,
        /// Oracle spec as inline JSON or a path to a JSON file.
        #[arg(long)]
        oracle: String,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Response length the oracle is built for.
        #[arg(long, default_value_t = 64)]
        len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DIFT_LOG", "warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run { config, trace_dir } => run::cmd_run(config, trace_dir.as_deref()),
        Command::Analyze {
            traces,
            report,
            svg,
            buckets,
        } => analyze::cmd_analyze(traces, report, svg.as_deref(), *buckets),
        Command::Bench { config, json } => bench::cmd_bench(config, *json),
        Command::ToyServe {
            port,
            oracle,
            host,
            len,
            seed,
        } => serve::cmd_toy_serve(*host, *port, oracle, *len, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dift: {e}");
            e.exit_code()
        }
    }
}
