//! Library side of the `sstr` command-line tool: experiment files, execution
//! and CSV/manifest output.

pub mod run;
pub mod spec;

use serde::Serialize;

pub use run::{execute, ExecOptions, Manifest, Output};
pub use spec::{parse_spec, parse_spec_with, Command, ExperimentSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("line {line}, key `{key}`: {message}")]
    Parse { line: usize, key: String, message: String },

    #[error(transparent)]
    Core(#[from] sstr_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

/// Machine-readable failure written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub exit_code: i32,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        use sstr_core::Error as E;
        match self {
            CliError::Parse { .. } => "parse_error",
            CliError::Core(E::OutOfRange { .. }) => "out_of_range",
            CliError::Core(E::InsufficientTrials(_)) => "insufficient_trials",
            CliError::Core(E::ShapeMismatch(_)) => "shape_mismatch",
            CliError::Core(E::DegenerateDistribution { .. }) => "degenerate_distribution",
            CliError::Core(E::ZfUnavailable(_)) => "zf_unavailable",
            CliError::Io { .. } => "io_error",
            CliError::Csv(_) => "io_error",
        }
    }

    /// 1 for bad input, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use sstr_core::Error as E;
        match self {
            CliError::Core(E::ShapeMismatch(_) | E::DegenerateDistribution { .. } | E::ZfUnavailable(_)) => 2,
            _ => 1,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let (line, key) = match self {
            CliError::Parse { line, key, .. } => (Some(*line), Some(key.clone())),
            CliError::Core(e) => (None, e.field().map(str::to_string)),
            _ => (None, None),
        };
        ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
            line,
            key,
            exit_code: self.exit_code(),
        }
    }
}
