//! Convergence detection and time-to-accuracy over evaluation histories.

use super::MetricsError;

/// One accuracy evaluation: simulated time, global step, and the measured
/// test accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub sim_time_s: f64,
    pub global_step: u64,
    pub accuracy: f64,
}

/// Stability rule: converged when max - min over the trailing
/// `window` evaluations is at most `tolerance` (absolute).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceDetector {
    pub window: usize,
    pub tolerance: f64,
}

impl Default for ConvergenceDetector {
    fn default() -> Self {
        Self { window: 5, tolerance: 0.001 }
    }
}

/// Converged accuracy: the last value of the first stable window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub accuracy: f64,
    /// 1-based index of the evaluation that completed the stable window.
    pub eval_index: usize,
    pub global_step: u64,
    pub sim_time_s: f64,
}

impl ConvergenceDetector {
    /// Scans the history for the first index where the stability rule holds.
    pub fn detect(&self, history: &[EvalPoint]) -> Option<Convergence> {
        if history.len() < self.window {
            return None;
        }
        for end in self.window..=history.len() {
            let win = &history[end - self.window..end];
            let max = win.iter().map(|p| p.accuracy).fold(f64::NEG_INFINITY, f64::max);
            let min = win.iter().map(|p| p.accuracy).fold(f64::INFINITY, f64::min);
            if max - min <= self.tolerance {
                let last = win[self.window - 1];
                return Some(Convergence {
                    accuracy: last.accuracy,
                    eval_index: end,
                    global_step: last.global_step,
                    sim_time_s: last.sim_time_s,
                });
            }
        }
        None
    }
}

/// Converged accuracy of a completed evaluation history; diverged traces
/// must not be offered here.
pub fn converged_accuracy(
    history: &[EvalPoint],
    detector: &ConvergenceDetector,
) -> Result<Convergence, MetricsError> {
    detector.detect(history).ok_or(MetricsError::Diverged)
}

/// Simulated seconds until the first evaluation at or above `threshold`;
/// `None` when never attained.
pub fn tta(history: &[EvalPoint], threshold: f64) -> Option<f64> {
    history.iter().find(|p| p.accuracy >= threshold).map(|p| p.sim_time_s)
}
