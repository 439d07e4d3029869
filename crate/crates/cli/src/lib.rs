//! Library behind the `twistframe` binary: configuration loading, operator
//! parsing and the six analysis commands. Each command reads a resolved
//! [`config::RunConfig`], writes its artifacts atomically under the output
//! directory, and reports failures through [`CliError`] so the binary can
//! map them to exit codes (2 for configuration, 3 for numerical failures).

pub mod commands;
pub mod config;

/// Command-level errors, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<twistframe::Error> for CliError {
    fn from(e: twistframe::Error) -> Self {
        match e {
            twistframe::Error::Parse(m) => CliError::Config(m),
            twistframe::Error::InvalidGrid(m) | twistframe::Error::Unsupported(m) => {
                CliError::Config(m)
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}
