//! Scenario runner behind the `sben` binary.

pub mod config;
pub mod plot;
pub mod run;
pub mod selftest;

use std::fmt;

pub use config::{RunConfig, RunKind, SCHEMA};
pub use run::{run, RunOptions, RunOutcome};

/// Exit codes: 1 invalid input, 2 a verdict failed, 3 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Verdict(String),
    Numerical(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Verdict(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Verdict(m) => write!(f, "verdict failed: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<sben_core::Error> for CliError {
    fn from(e: sben_core::Error) -> Self {
        use sben_core::Error as E;
        match e {
            E::TooManyFlaggedSteps { .. } | E::NonFinite(_) => CliError::Numerical(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let flagged: CliError = sben_core::Error::TooManyFlaggedSteps { flagged: 3, total: 10 }.into();
        assert_eq!(flagged.exit_code(), 3);
        let gate: CliError = sben_core::Error::HypothesisDViolated {
            min_value: -1.0,
            tolerance: 1e-10,
        }
        .into();
        assert_eq!(gate.exit_code(), 1);
        assert_eq!(CliError::Verdict("x".into()).exit_code(), 2);
    }
}
