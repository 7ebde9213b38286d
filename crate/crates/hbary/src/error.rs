use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("invalid input: {0}")]
    Core(#[source] hbary_core::Error),
    #[error("solver failed: {0}")]
    Solver(#[source] hbary_core::Error),
    #[error("diagnostics failed: {}", failed.join(", "))]
    Diagnostics { failed: Vec<String> },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, detail: impl ToString) -> Self {
        Self::Parse {
            path: path.into(),
            detail: detail.to_string(),
        }
    }

    /// Process exit code: 1 for bad input, 2 for solver failures, 3 for
    /// failed diagnostics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } | Self::Parse { .. } | Self::Validation(_) | Self::Core(_) => 1,
            Self::Solver(_) => 2,
            Self::Diagnostics { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Parse { .. } => "parse",
            Self::Validation(_) | Self::Core(_) => "validation",
            Self::Solver(_) => "solver",
            Self::Diagnostics { .. } => "diagnostics",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
            failed_checks: match self {
                Self::Diagnostics { failed } => failed.clone(),
                _ => Vec::new(),
            },
        }
    }
}

/// Sorts solver-side errors into input problems and genuine solver failures.
impl From<hbary_core::Error> for CliError {
    fn from(e: hbary_core::Error) -> Self {
        use hbary_core::Error as E;
        match e {
            E::NonConvergence { .. }
            | E::NumericalStall { .. }
            | E::Infeasible(_)
            | E::OptimalityViolation { .. }
            | E::TensorEntry { .. } => Self::Solver(e),
            _ => Self::Core(e),
        }
    }
}

/// Machine-readable error record written to stderr and `error.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub error: &'static str,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failed_checks: Vec<String>,
}
