//! Scenario runner for the risk-sharing planner and the catalogue game:
//! scenario files, run records, plots, comparison reports and oracle suites.

pub mod oracle;
pub mod plot;
pub mod record;
pub mod report;
pub mod run;
pub mod scenario;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("scenario {0}")]
    Scenario(String),
    #[error("solver failed: {0}")]
    Solver(#[from] riskshare_core::Error),
    #[error("oracle suite failed: {0}")]
    Oracle(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Scenario(_) | CliError::Io { .. } => 1,
            CliError::Solver(_) => 2,
            CliError::Oracle(_) => 3,
        }
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}
