//! Run traces: the timestamped record stream plus terminal accounting.

use serde::{Deserialize, Serialize};

use crate::metrics::EvalPoint;
use crate::policies::Protocol;

/// Why a trace record was emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    Init,
    Eval,
    SwitchBegin,
    SwitchEnd,
    InjectionStart,
    InjectionEnd,
    Resize,
    Restore,
    End,
    Diverged,
}

impl std::fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TraceEvent::Init => "init",
            TraceEvent::Eval => "eval",
            TraceEvent::SwitchBegin => "switch_begin",
            TraceEvent::SwitchEnd => "switch_end",
            TraceEvent::InjectionStart => "injection_start",
            TraceEvent::InjectionEnd => "injection_end",
            TraceEvent::Resize => "resize",
            TraceEvent::Restore => "restore",
            TraceEvent::End => "end",
            TraceEvent::Diverged => "diverged",
        };
        write!(f, "{s}")
    }
}

/// One timestamped trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sim_time_s: f64,
    pub global_step: u64,
    pub protocol: Protocol,
    pub train_loss: f64,
    pub test_accuracy: f64,
    /// Cluster samples/s since the previous record (0 at zero elapsed).
    pub throughput_total: f64,
    pub active_workers: Vec<u32>,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged,
}

/// Exact wall decomposition of the run, in nanoseconds. For every worker,
/// init + compute + network + barrier wait + switch + idle tiles its entire
/// timeline, so the residual against `n_workers * total` is zero by
/// construction — the suite asserts it anyway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TimeAccounting {
    pub init_ns: u64,
    pub compute_ns: u64,
    pub network_ns: u64,
    pub barrier_wait_ns: u64,
    pub switch_ns: u64,
    /// Tail idling (no workload left) plus time spent removed from the
    /// cluster.
    pub idle_ns: u64,
}

impl TimeAccounting {
    pub fn total_ns(&self) -> u64 {
        self.init_ns
            + self.compute_ns
            + self.network_ns
            + self.barrier_wait_ns
            + self.switch_ns
            + self.idle_ns
    }
}

/// Complete output of one simulated run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub status: RunStatus,
    pub records: Vec<TraceRecord>,
    /// Accuracy evaluations in order, for convergence/TTA analysis.
    pub evals: Vec<EvalPoint>,
    pub total_time_s: f64,
    pub total_time_ns: u64,
    pub global_steps: u64,
    pub samples_applied: u64,
    /// Samples processed under BSP (the straggler policies' quota unit).
    pub samples_bsp: u64,
    pub num_switches: u32,
    pub switch_overhead_total_s: f64,
    pub init_time_s: f64,
    /// Per-worker exact time decomposition, indexed by worker id.
    pub accounting: Vec<TimeAccounting>,
    /// Histogram of staleness values over every apply.
    pub staleness: std::collections::BTreeMap<u64, u64>,
    pub final_accuracy: f64,
    pub final_loss: f64,
    /// Parameter values at termination (oracle comparisons).
    pub final_params: Vec<f64>,
    /// Parameter version at termination (= total applied updates).
    pub final_version: u64,
}

impl RunTrace {
    pub fn max_staleness(&self) -> Option<u64> {
        self.staleness.keys().next_back().copied()
    }

    /// Total applies recorded in the staleness histogram.
    pub fn total_applies(&self) -> u64 {
        self.staleness.values().sum()
    }
}
