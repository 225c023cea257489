//! Deterministic file output: shortest round-trip float formatting and
//! atomic writes (temp file + rename) so failed runs never leave partial
//! artifacts behind.

use std::fmt::Write as _;
use std::path::Path;

use syncsim::sim::{RunStatus, RunTrace};

use crate::CliError;

/// Writes `content` to `path` atomically.
pub fn atomic_write(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::io(e, &format!("creating {}", parent.display())))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)
        .map_err(|e| CliError::io(e, &format!("writing {}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::io(e, &format!("renaming into {}", path.display())))?;
    Ok(())
}

/// Shortest round-trip decimal representation (Rust's Display for f64).
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Fixed trace.csv column set, in order.
pub const TRACE_HEADER: &str =
    "sim_time_s,global_step,protocol,train_loss,test_accuracy,throughput_total,active_workers,event";

pub fn trace_csv(trace: &RunTrace) -> String {
    let mut out = String::with_capacity(128 * (trace.records.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let workers: Vec<String> = r.active_workers.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(r.sim_time_s),
            r.global_step,
            r.protocol,
            fmt_f64(r.train_loss),
            fmt_f64(r.test_accuracy),
            fmt_f64(r.throughput_total),
            workers.join(";"),
            r.event,
        );
    }
    out
}

/// Summary record serialized per run.
#[derive(serde::Serialize)]
pub struct Summary {
    pub status: RunStatus,
    pub seed: u64,
    pub config_digest: String,
    pub converged_accuracy: Option<f64>,
    pub converged_at_eval: Option<usize>,
    pub total_time_s: f64,
    pub tta_s: Option<f64>,
    pub num_switches: u32,
    pub switch_overhead_total_s: f64,
    pub init_time_s: f64,
    pub global_steps: u64,
    pub samples_applied: u64,
    pub samples_bsp: u64,
    pub max_staleness: Option<u64>,
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub accounting: AccountingSummary,
}

/// Cluster-total time decomposition in seconds, with the per-worker
/// residual check already folded in (always zero by construction).
#[derive(serde::Serialize)]
pub struct AccountingSummary {
    pub init_s: f64,
    pub compute_s: f64,
    pub network_s: f64,
    pub barrier_wait_s: f64,
    pub switch_s: f64,
    pub idle_s: f64,
    pub residual_ns: i128,
}

pub fn summarize(trace: &RunTrace, seed: u64, digest: &str, tta_threshold: Option<f64>) -> Summary {
    let detector = syncsim::metrics::ConvergenceDetector::default();
    let convergence =
        if trace.status == RunStatus::Completed { detector.detect(&trace.evals) } else { None };
    let tta = tta_threshold.and_then(|t| syncsim::metrics::tta(&trace.evals, t));

    let ns = |v: u64| v as f64 / 1e9;
    let sum = |f: fn(&syncsim::sim::TimeAccounting) -> u64| -> f64 {
        ns(trace.accounting.iter().map(f).sum())
    };
    let residual: i128 = trace
        .accounting
        .iter()
        .map(|a| a.total_ns() as i128 - trace.total_time_ns as i128)
        .sum();

    Summary {
        status: trace.status,
        seed,
        config_digest: digest.to_string(),
        converged_accuracy: convergence.map(|c| c.accuracy),
        converged_at_eval: convergence.map(|c| c.eval_index),
        total_time_s: trace.total_time_s,
        tta_s: tta,
        num_switches: trace.num_switches,
        switch_overhead_total_s: trace.switch_overhead_total_s,
        init_time_s: trace.init_time_s,
        global_steps: trace.global_steps,
        samples_applied: trace.samples_applied,
        samples_bsp: trace.samples_bsp,
        max_staleness: trace.max_staleness(),
        final_accuracy: trace.final_accuracy,
        final_loss: trace.final_loss,
        accounting: AccountingSummary {
            init_s: sum(|a| a.init_ns),
            compute_s: sum(|a| a.compute_ns),
            network_s: sum(|a| a.network_ns),
            barrier_wait_s: sum(|a| a.barrier_wait_ns),
            switch_s: sum(|a| a.switch_ns),
            idle_s: sum(|a| a.idle_ns),
            residual_ns: residual,
        },
    }
}

pub fn to_pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
