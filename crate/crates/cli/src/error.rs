use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, anchored to a line when one can be found.
    #[error("{}", render_config(path, *line, *column, message))]
    Config { path: Option<PathBuf>, line: Option<usize>, column: Option<usize>, message: String },

    #[error("{0}")]
    Core(#[from] histlab::Error),

    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },

    #[error("missing input files in {dir}: {}", files.join(", "))]
    MissingInputs { dir: PathBuf, files: Vec<String> },
}

fn render_config(path: &Option<PathBuf>, line: Option<usize>, column: Option<usize>, msg: &str) -> String {
    let mut s = String::new();
    if let Some(p) = path {
        s.push_str(&p.display().to_string());
        if let Some(l) = line {
            s.push_str(&format!(":{l}"));
            if let Some(c) = column {
                s.push_str(&format!(":{c}"));
            }
        }
        s.push_str(": ");
    }
    s.push_str("config error: ");
    s.push_str(msg);
    s
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config { path: None, line: None, column: None, message: message.into() }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    /// Process exit status: 2 for configuration problems, 3 for tripped
    /// numerical guards, 4 for IO, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(e) if e.is_numerical_guard() => 3,
            CliError::Core(histlab::Error::Io(_)) | CliError::Io { .. } | CliError::MissingInputs { .. } => 4,
            CliError::Core(
                histlab::Error::Invalid(_)
                | histlab::Error::GridMismatch(_)
                | histlab::Error::EmptyEnsemble(_)
                | histlab::Error::LabelMismatch(_)
                | histlab::Error::Json(_),
            ) => 2,
            CliError::Core(_) => 1,
        }
    }

    /// Name of the tripped guard, for numerical failures.
    pub fn guard_name(&self) -> Option<&'static str> {
        match self {
            CliError::Core(histlab::Error::Cancellation { .. }) => Some("cancellation"),
            CliError::Core(histlab::Error::BranchExplosion { .. }) => Some("branch_explosion"),
            CliError::Core(histlab::Error::DimensionGuard(_)) => Some("dimension_guard"),
            _ => None,
        }
    }
}
