use serde::Serialize;
use sib_core::SibError;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failures surfaced to the command line, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    exit_code: i32,
    message: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        let report = ErrorReport { error: self.kind(), exit_code: self.exit_code(), message: self.to_string() };
        serde_json::to_string(&report).expect("plain strings serialize")
    }

    pub fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    pub(crate) fn context(self, what: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        }
    }
}

impl From<SibError> for CliError {
    fn from(err: SibError) -> Self {
        let message = err.to_string();
        match err {
            SibError::Config(_) | SibError::InvalidFamily(_) => CliError::Config(message),
            SibError::InvalidData(_) | SibError::InvalidInput(_) | SibError::Shape(_) => CliError::Data(message),
            SibError::Numerical { .. } | SibError::SearchFailure(_) | SibError::Selection(_) => {
                CliError::Numerical(message)
            }
        }
    }
}
