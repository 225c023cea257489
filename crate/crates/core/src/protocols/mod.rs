//! BSP and ASP parameter-server state machines.
//!
//! Both protocols mutate a single [`ParameterVector`] + [`MomentumState`]
//! pair. BSP collects one gradient per expected worker at a barrier and
//! applies one aggregated update; ASP applies each gradient immediately on
//! arrival and records its staleness. State machines are single-owner and
//! driven by the simulator's event loop.

mod shard;

pub use shard::PSShardSpec;

use std::collections::{BTreeMap, BTreeSet};

use crate::kernel::{sgd_momentum_step, KernelError, MomentumState, ParameterVector};

/// Errors from protocol state transitions.
#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("protocol violation: missing gradient from worker {0}")]
    MissingWorker(u32),
    #[error("protocol violation: duplicate gradient from worker {0}")]
    DuplicateWorker(u32),
    #[error("protocol violation: gradient from worker {0} outside the barrier's expected set")]
    UnexpectedWorker(u32),
    #[error(
        "barrier integrity: worker {worker} pushed base_version {got}, superstep expects {expected}"
    )]
    BarrierIntegrity { worker: u32, expected: u64, got: u64 },
    #[error("causality: gradient base_version {base} is ahead of server version {current}")]
    Causality { base: u64, current: u64 },
    #[error("gradient length {got} does not match parameter length {expected}")]
    GradLength { expected: usize, got: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// A worker's gradient push. `base_version` is the parameter version the
/// gradient was computed against — the unit of staleness accounting.
#[derive(Debug, Clone)]
pub struct GradientMessage {
    pub worker_id: u32,
    pub base_version: u64,
    pub grad: Vec<f64>,
    pub batch_size: u64,
    /// Simulated time the producing compute finished, in seconds.
    pub compute_finished_at: f64,
}

/// Immutable snapshot handed to a worker by a pull. The recorded version
/// becomes the `base_version` of the worker's next gradient.
#[derive(Debug, Clone)]
pub struct ParamSnapshot {
    pub values: Vec<f64>,
    pub version: u64,
}

/// Snapshot of the current parameters; later applies do not affect it.
pub fn pull_params(params: &ParameterVector) -> ParamSnapshot {
    ParamSnapshot { values: params.values.clone(), version: params.version }
}

/// Gradient-collection barrier for one BSP superstep.
///
/// `received` is always a subset of `expected`; the barrier releases exactly
/// when they are equal.
#[derive(Debug, Clone)]
pub struct BarrierState {
    expected: BTreeSet<u32>,
    received: BTreeMap<u32, GradientMessage>,
}

impl BarrierState {
    pub fn new(expected: impl IntoIterator<Item = u32>) -> Self {
        Self { expected: expected.into_iter().collect(), received: BTreeMap::new() }
    }

    pub fn expected(&self) -> &BTreeSet<u32> {
        &self.expected
    }

    pub fn received_count(&self) -> usize {
        self.received.len()
    }

    /// Accepts a worker's gradient; returns whether the barrier is now
    /// complete. Duplicate or unexpected workers are protocol violations.
    pub fn receive(&mut self, msg: GradientMessage) -> Result<bool, ProtocolError> {
        if !self.expected.contains(&msg.worker_id) {
            return Err(ProtocolError::UnexpectedWorker(msg.worker_id));
        }
        if self.received.contains_key(&msg.worker_id) {
            return Err(ProtocolError::DuplicateWorker(msg.worker_id));
        }
        self.received.insert(msg.worker_id, msg);
        Ok(self.received.len() == self.expected.len())
    }

    /// Drains the collected gradients in worker-id order; fails if any
    /// expected worker is missing.
    pub fn take_complete(&mut self) -> Result<Vec<GradientMessage>, ProtocolError> {
        if let Some(&missing) = self.expected.iter().find(|w| !self.received.contains_key(w)) {
            return Err(ProtocolError::MissingWorker(missing));
        }
        let drained = std::mem::take(&mut self.received);
        Ok(drained.into_values().collect())
    }

    /// Discards any partial collection (used when a switch aborts the
    /// in-flight superstep).
    pub fn reset(&mut self, expected: impl IntoIterator<Item = u32>) {
        self.expected = expected.into_iter().collect();
        self.received.clear();
    }
}

/// Per-apply staleness log: a running histogram of
/// `server version at apply - base_version`.
#[derive(Debug, Clone, Default)]
pub struct StalenessRecord {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl StalenessRecord {
    pub fn record(&mut self, staleness: u64) {
        *self.counts.entry(staleness).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn total_applies(&self) -> u64 {
        self.total
    }

    pub fn max(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    pub fn histogram(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }
}

/// Applies one BSP superstep: the batch-size-weighted mean of the collected
/// gradients, as a single momentum update.
///
/// Requires exactly one message per expected worker, all computed against the
/// current parameter version; with each worker holding a distinct slice of
/// the effective batch this equals a serial SGD step on the concatenated
/// batch. Every message records staleness 0.
pub fn bsp_superstep(
    msgs: &[GradientMessage],
    params: &mut ParameterVector,
    mstate: &mut MomentumState,
    lr: f64,
    momentum: f64,
    staleness: &mut StalenessRecord,
) -> Result<(), ProtocolError> {
    let mut seen = BTreeSet::new();
    for msg in msgs {
        if !seen.insert(msg.worker_id) {
            return Err(ProtocolError::DuplicateWorker(msg.worker_id));
        }
        if msg.base_version != params.version {
            return Err(ProtocolError::BarrierIntegrity {
                worker: msg.worker_id,
                expected: params.version,
                got: msg.base_version,
            });
        }
        if msg.grad.len() != params.values.len() {
            return Err(ProtocolError::GradLength {
                expected: params.values.len(),
                got: msg.grad.len(),
            });
        }
    }
    if msgs.is_empty() {
        return Err(ProtocolError::Kernel(KernelError::EmptyBatch));
    }

    let total: u64 = msgs.iter().map(|m| m.batch_size).sum();
    let mut agg = vec![0.0; params.values.len()];
    for msg in msgs {
        let w = msg.batch_size as f64 / total as f64;
        for (a, g) in agg.iter_mut().zip(&msg.grad) {
            *a += w * g;
        }
    }
    sgd_momentum_step(params, mstate, &agg, lr, momentum)?;
    for _ in msgs {
        staleness.record(0);
    }
    Ok(())
}

/// Applies one gradient immediately against the current parameters and
/// returns the recorded staleness.
pub fn asp_apply(
    msg: &GradientMessage,
    params: &mut ParameterVector,
    mstate: &mut MomentumState,
    lr: f64,
    momentum: f64,
    staleness: &mut StalenessRecord,
) -> Result<u64, ProtocolError> {
    if msg.base_version > params.version {
        return Err(ProtocolError::Causality { base: msg.base_version, current: params.version });
    }
    if msg.grad.len() != params.values.len() {
        return Err(ProtocolError::GradLength {
            expected: params.values.len(),
            got: msg.grad.len(),
        });
    }
    let stale = params.version - msg.base_version;
    sgd_momentum_step(params, mstate, &msg.grad, lr, momentum)?;
    staleness.record(stale);
    Ok(stale)
}
