//! Batch front end for the phase-locked photon-echo simulator: scenario
//! files in, CSV/JSON (and optional SVG) out.

use std::fmt;

pub mod config;
pub mod output;
pub mod plot;
pub mod runner;

/// Command-level errors with the documented exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Unreadable or schema-invalid input (exit 2).
    Config(String),
    /// Protocol-shape violation such as LOCK_TOO_LATE (exit 3).
    Validation(String),
    /// Numerical failure during integration or analysis (exit 4).
    Numerical(String),
    /// Degenerate decay fit (exit 5).
    Fit(String),
    /// Output I/O failure (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Fit(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Fit(m) => write!(f, "fit error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
