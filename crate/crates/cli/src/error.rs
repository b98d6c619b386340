use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or input files; nothing was solved.
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} failed: {source}")]
    Solver {
        stage: &'static str,
        #[source]
        source: serrin_core::Error,
    },
    /// Some points failed; results for the others were written.
    #[error("{stage}: {failed} of {total} points failed")]
    Partial {
        stage: &'static str,
        failed: usize,
        total: usize,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Solver { .. } | CliError::Partial { .. } | CliError::Io { .. } => ExitCode::from(3),
        }
    }
}
