use std::fmt;

use qrun_core::Error;

pub const OK: u8 = 0;
pub const CONTRACT: u8 = 1;
pub const DEGENERATE: u8 = 2;
pub const DIVERGED: u8 = 3;

/// A failure carrying the process exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn contract(message: impl Into<String>) -> Self {
        Self {
            code: CONTRACT,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence { .. } => DIVERGED,
            _ => CONTRACT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::contract(format!("io error: {e}"))
    }
}
