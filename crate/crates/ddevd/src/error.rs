use thiserror::Error;

/// Failures of the command-line layer, wrapping numerical errors.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ddevd_core::Error),
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::EmptyInput(_) => "empty-input",
            CliError::Config(_) => "configuration",
            CliError::Json(_) => "serialization",
        }
    }

    pub fn hint(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.hint(),
            CliError::Io { .. } => "check the path and permissions",
            CliError::Parse { .. } => "rows must be `block_id,value` with an integer id and a finite value",
            CliError::EmptyInput(_) => "supply at least one data row after the header",
            CliError::Config(_) => "see `ddevd <command> --help` for accepted options",
            CliError::Json(_) => "check the JSON configuration file",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
