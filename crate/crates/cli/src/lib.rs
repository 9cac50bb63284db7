//! Command-line front end for the `ddtwa` simulator: scenario files,
//! DDTWA and oracle runs, table comparison and parameter sweeps.

pub mod commands;
pub mod compare;
pub mod config;

pub use commands::{run, run_oracle_command, sweep, Outputs};
pub use compare::{compare_tables, ColumnReport, CompareReport};
pub use config::{ScenarioConfig, SCHEMA_VERSION};

/// Failure classes, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("comparison failed: {0}")]
    Comparison(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Comparison(_) => 3,
        }
    }
}

impl From<ddtwa::Error> for CliError {
    fn from(e: ddtwa::Error) -> Self {
        use ddtwa::Error as E;
        match e {
            E::NonFinite { .. } | E::PhotonCutoff { .. } | E::OracleDrift { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
