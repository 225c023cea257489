//! Experiment runner: config loading, the simulate/search/sweep/analyze
//! subcommands, and deterministic CSV/JSON outputs.

pub mod commands;
pub mod config;
pub mod output;

/// Process exit codes. Validation problems and coverage gaps are distinct
/// from divergence so scripts can tell them apart.
pub mod exit_codes {
    pub const OK: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const INVALID_CONFIG: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const COVERAGE: i32 = 4;
}

/// Errors carrying their process exit code.
#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self { exit_code: exit_codes::INVALID_CONFIG, message: msg.into() }
    }

    pub fn io(err: std::io::Error, context: &str) -> Self {
        Self { exit_code: exit_codes::ERROR, message: format!("{context}: {err}") }
    }
}
