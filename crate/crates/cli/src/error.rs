use std::fmt;

use crate::config::ConfigError;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(eventum_core::Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn class(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config-error",
            RunError::Core(e) => e.class(),
            RunError::Io(_) => "io-error",
        }
    }

    /// 2 for numerical failures, 1 for everything attributable to the input.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Core(eventum_core::Error::NumericalFailure(_)) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error: {e}"),
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<eventum_core::Error> for RunError {
    fn from(e: eventum_core::Error) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}
