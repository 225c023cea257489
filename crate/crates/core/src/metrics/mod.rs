//! Metric extraction and search-cost analysis.
//!
//! A model counts as converged once its test accuracy has not moved by more
//! than 0.1% (absolute) across five consecutive evaluations; the last value
//! of that window is the converged accuracy. Time-to-accuracy is the
//! simulated time of the first evaluation at or above a threshold. The
//! Monte-Carlo analysis replays the timing search over a pool of recorded
//! sessions to price different search settings.

mod convergence;
mod cost;
mod monte_carlo;

pub use convergence::{converged_accuracy, tta, Convergence, ConvergenceDetector, EvalPoint};
pub use cost::{amortization, effective_training_ratio, speedups, Amortization, Speedup, Speedups};
pub use monte_carlo::{monte_carlo_search, CostReport, PooledSession, SearchSetting};

/// Errors from the analysis operations.
#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("trace diverged; no converged accuracy")]
    Diverged,
    #[error("session pool does not cover fraction {0}")]
    Coverage(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
