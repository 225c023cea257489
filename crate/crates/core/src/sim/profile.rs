//! Worker timing profiles, straggler injections, and switch overheads.

use serde::{Deserialize, Serialize};

use super::SimError;

/// Per-worker timing model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerProfile {
    pub worker_id: u32,
    /// Seconds to compute one local mini-batch.
    pub base_step_time_s: f64,
    /// Multiplicative lognormal jitter sigma on compute durations; 0 keeps
    /// the closed-form timing oracles exact.
    #[serde(default)]
    pub jitter_sigma: f64,
    /// Seconds per push or pull message.
    pub base_net_latency_s: f64,
}

impl WorkerProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.base_step_time_s > 0.0) {
            return Err(SimError::InvalidSpec(format!(
                "worker {}: base_step_time_s must be > 0",
                self.worker_id
            )));
        }
        if self.base_net_latency_s < 0.0 || self.jitter_sigma < 0.0 {
            return Err(SimError::InvalidSpec(format!(
                "worker {}: latency and jitter must be >= 0",
                self.worker_id
            )));
        }
        Ok(())
    }
}

/// A scheduled transient slowdown on one worker: extra latency on every
/// message and an optional compute multiplier, active on activities that
/// start inside `[onset, onset + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StragglerInjection {
    pub worker_id: u32,
    pub onset_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub added_latency_s: f64,
    #[serde(default = "one")]
    pub compute_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

/// Transient slowdowns are bounded by the time to provision a replacement
/// server.
pub const DEFAULT_MAX_TRANSIENT_DURATION_S: f64 = 100.0;

pub(crate) fn validate_injections(
    injections: &[StragglerInjection],
    n_workers: u32,
    max_duration_s: f64,
) -> Result<(), SimError> {
    for inj in injections {
        if inj.worker_id >= n_workers {
            return Err(SimError::InvalidSpec(format!(
                "injection targets unknown worker {}",
                inj.worker_id
            )));
        }
        if inj.onset_s < 0.0 || !(inj.duration_s > 0.0) {
            return Err(SimError::InvalidSpec("injection onset/duration invalid".into()));
        }
        if inj.duration_s > max_duration_s {
            return Err(SimError::InvalidSpec(format!(
                "injection duration {}s exceeds the transient bound {}s",
                inj.duration_s, max_duration_s
            )));
        }
        if inj.added_latency_s < 0.0 || inj.compute_multiplier < 1.0 {
            return Err(SimError::InvalidSpec(
                "injection latency must be >= 0 and compute multiplier >= 1".into(),
            ));
        }
    }
    // Per-worker occurrences must not overlap.
    let mut by_worker: std::collections::BTreeMap<u32, Vec<(f64, f64)>> = Default::default();
    for inj in injections {
        by_worker.entry(inj.worker_id).or_default().push((inj.onset_s, inj.onset_s + inj.duration_s));
    }
    for (worker, mut spans) in by_worker {
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        if spans.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(SimError::InvalidSpec(format!(
                "worker {worker} has overlapping straggler injections"
            )));
        }
    }
    Ok(())
}

/// Fixed overheads charged by the engine: one cluster initialization and one
/// checkpoint/restore per protocol switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchOverheadModel {
    pub checkpoint_plus_restart_s: f64,
    pub cluster_init_s: f64,
}

impl SwitchOverheadModel {
    /// Measured values for the parallel actuator: 36 s switch / 90 s init on
    /// 8 workers, 53 s / 128 s on 16.
    pub fn for_cluster(n: u32) -> Self {
        if n <= 8 {
            Self { checkpoint_plus_restart_s: 36.0, cluster_init_s: 90.0 }
        } else {
            Self { checkpoint_plus_restart_s: 53.0, cluster_init_s: 128.0 }
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.checkpoint_plus_restart_s < 0.0 || self.cluster_init_s < 0.0 {
            return Err(SimError::InvalidSpec("overheads must be >= 0".into()));
        }
        Ok(())
    }
}
