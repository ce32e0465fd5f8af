use serde::Serialize;

/// Failures surfaced by the command-line driver, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, invalid configuration or unreadable inputs.
    #[error("{0}")]
    Config(String),
    /// The computation ran but failed numerically or did not converge.
    #[error("{0}")]
    Numerical(String),
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
        }
    }

    /// One-line JSON object for standard error.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorReport { error: self.kind(), message: self.to_string(), exit_code: self.exit_code() })
            .expect("plain strings serialize")
    }
}

impl From<sigsde::Error> for CliError {
    fn from(e: sigsde::Error) -> Self {
        use sigsde::Error as E;
        match e {
            E::Numerical(_) | E::AllStartsDiverged(_) | E::RankDeficient { .. } | E::AlgebraOrderTooSmall { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
