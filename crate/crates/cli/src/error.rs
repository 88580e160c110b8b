use thiserror::Error;

/// Failures of the command-line layer, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] osc_core::Error),

    #[error("{failed} of {total} runs failed; partial results written. First failure: {first}")]
    RunsFailed { failed: usize, total: usize, first: String },

    #[error("acceptance check failed: {0}")]
    Check(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(line: Option<usize>, message: impl Into<String>) -> Self {
        CliError::Config {
            line,
            message: message.into(),
        }
    }

    /// 2 for bad configuration or input, 3 for protocol or invariant
    /// failures during a run, 4 for a failed statistical check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                osc_core::Error::Protocol(_) | osc_core::Error::Invariant(_) => 3,
                _ => 2,
            },
            CliError::RunsFailed { .. } => 3,
            CliError::Check(_) => 4,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
