//! Seeded SGD training kernel on a synthetic classification workload.
//!
//! The kernel is single-threaded and pure: every function is a deterministic
//! map from its inputs, so callers may run many independent kernels in
//! parallel as long as each owns its state.

mod dataset;
mod model;
mod optim;
mod schedule;

pub use dataset::{make_dataset, Sample, SyntheticDataset};
pub use model::{loss_and_grad, per_sample_grad, test_accuracy, ModelSpec, ParameterVector};
pub use optim::{sgd_momentum_step, MomentumState};
pub use schedule::{lr_at, LRSchedule};

use serde::{Deserialize, Serialize};

/// Errors from kernel operations.
#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged: non-finite {0}")]
    Diverged(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// User-facing training hyper-parameters.
///
/// `batch_size` follows the protocol's view of a batch: a global value under
/// BSP (distributed across workers) and a per-worker local value under ASP.
/// The configuration policy in [`crate::policies`] derives the per-protocol
/// values from the user-provided base set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Samples per step, in the owning protocol's view.
    pub batch_size: u64,
    pub learning_rate: f64,
    /// Momentum coefficient in [0, 1).
    pub momentum: f64,
    /// L2 weight decay; the regularizer term f(w) = weight_decay * w.
    pub weight_decay: f64,
    /// Total samples to process over the whole run.
    pub total_workload: u64,
    pub lr_schedule: LRSchedule,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), KernelError> {
        if self.batch_size == 0 {
            return Err(KernelError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.total_workload % self.batch_size != 0 {
            return Err(KernelError::InvalidConfig(format!(
                "total_workload {} is not a multiple of batch_size {}",
                self.total_workload, self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(KernelError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(KernelError::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(KernelError::InvalidConfig("weight_decay must be >= 0".into()));
        }
        self.lr_schedule.validate().map_err(KernelError::InvalidConfig)
    }
}
