use std::fmt;

/// Process exit codes, one per error category.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration.
    Config(String),
    /// Missing, malformed or mismatched input files.
    Data(String),
    /// Singular moments, indefinite matrices, divergence.
    Numeric(String),
    /// Failures writing outputs.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Data(_) => exit::DATA,
            CliError::Numeric(_) => exit::NUMERIC,
            CliError::Io(_) => exit::IO,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config error",
            CliError::Data(_) => "data error",
            CliError::Numeric(_) => "numeric error",
            CliError::Io(_) => "i/o error",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) | CliError::Io(m) => m,
        }
    }

    /// Prefixes the message with where the error happened.
    pub fn context(self, what: impl fmt::Display) -> Self {
        let wrap = |m: String| format!("{what}: {m}");
        match self {
            CliError::Config(m) => CliError::Config(wrap(m)),
            CliError::Data(m) => CliError::Data(wrap(m)),
            CliError::Numeric(m) => CliError::Numeric(wrap(m)),
            CliError::Io(m) => CliError::Io(wrap(m)),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.category(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<regopt::Error> for CliError {
    fn from(e: regopt::Error) -> Self {
        use regopt::Error as E;
        let msg = e.to_string();
        if e.is_numerical() {
            return CliError::Numeric(msg);
        }
        match e {
            E::InvalidArgument(_) => CliError::Config(msg),
            E::File { .. } | E::Io(_) => CliError::Io(msg),
            _ => CliError::Data(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
