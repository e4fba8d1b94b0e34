use std::fmt;

/// Process exit status: 1 bad input, 2 numerical failure, 3 diagnostics
/// warning promoted by `--strict`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Input(String),
    Numerical(String),
    Diagnostics(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Diagnostics(_) => 3,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Diagnostics(m) => write!(f, "diagnostics warning (strict mode): {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<arbase::Error> for CliError {
    fn from(e: arbase::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
