use std::fmt;

/// Failure of a command before a report could be produced.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(qtreeff::Error),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<qtreeff::Error> for CliError {
    fn from(e: qtreeff::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;
pub const EXIT_RESOURCE: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use qtreeff::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(
                E::InvalidRank { .. } | E::InvalidParameter(_) | E::InfeasibleAssignment { .. } | E::DomainError(_),
            ) => EXIT_USAGE,
            CliError::Core(E::ResourceLimit { .. } | E::IterationLimit { .. }) => EXIT_RESOURCE,
            CliError::Core(_) | CliError::Io(_) => EXIT_VIOLATION,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "usage",
            EXIT_RESOURCE => "resource",
            _ => "failure",
        }
    }
}
