use std::fmt;
use std::process::ExitCode;

/// Failure of a subcommand, classified by exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad or unreadable input: exit status 1.
    Config(anyhow::Error),
    /// The oracle could not be queried or returned unusable output: exit status 2.
    Oracle(anyhow::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(err: impl Into<anyhow::Error>) -> Self {
        Self::Config(err.into())
    }

    pub fn oracle(err: impl Into<anyhow::Error>) -> Self {
        Self::Oracle(err.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Self::Config(_) => ExitCode::from(1),
            Self::Oracle(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e:#}"),
            Self::Oracle(e) => write!(f, "oracle failure: {e:#}"),
        }
    }
}
