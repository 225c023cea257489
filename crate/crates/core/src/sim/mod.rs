//! Deterministic discrete-event engine.
//!
//! Virtual time is integer nanoseconds, so interval sums close exactly and
//! the per-run time accounting decomposes with zero residual. Simultaneous
//! events process in (time, kind rank, subject, sequence) order — a total
//! order, hence bit-identical traces for identical inputs.

mod engine;
mod event;
mod profile;
mod throughput;
mod trace;

pub use engine::{run, BatchSampler, DataConfig, RunSpec};
pub use event::{Event, EventKind, EventQueue};
pub use profile::{
    StragglerInjection, SwitchOverheadModel, WorkerProfile, DEFAULT_MAX_TRANSIENT_DURATION_S,
};
pub use throughput::{Completion, ThroughputTracker};
pub use trace::{RunStatus, RunTrace, TimeAccounting, TraceEvent, TraceRecord};

use crate::kernel::KernelError;
use crate::policies::PolicyError;
use crate::protocols::ProtocolError;

/// Errors surfaced before or during a simulation run.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid run specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Virtual time in integer nanoseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(secs: f64) -> Self {
        debug_assert!(secs >= 0.0 && secs.is_finite());
        SimTime((secs * 1e9).round() as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn nanos(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::ops::Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl std::ops::AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nanosecond_round_trip() {
        assert_eq!(SimTime::from_secs_f64(1.0).nanos(), 1_000_000_000);
        assert_eq!(SimTime::from_secs_f64(0.01).nanos(), 10_000_000);
        assert_eq!(SimTime::from_secs_f64(36.0).as_secs_f64(), 36.0);
    }
}
