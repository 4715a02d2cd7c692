use std::fmt;
use std::process::ExitCode;

use mfg_core::MfgError;

/// A failed command together with the exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Io(anyhow::Error),
}

impl Failure {
    pub fn config(msg: impl fmt::Display) -> Self {
        Failure::Config(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Config(_) => ExitCode::from(2),
            Failure::Io(_) => ExitCode::from(3),
        }
    }

    /// Prefixes the message with `what`, keeping the category.
    pub fn context(self, what: impl fmt::Display + Send + Sync + 'static) -> Self {
        match self {
            Failure::Config(e) => Failure::Config(e.context(what)),
            Failure::Io(e) => Failure::Io(e.context(what)),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Io(e) => write!(f, "i/o error: {e:#}"),
        }
    }
}

impl From<MfgError> for Failure {
    fn from(e: MfgError) -> Self {
        match e {
            MfgError::Io(io) => Failure::Io(io.into()),
            other => Failure::Config(other.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;
