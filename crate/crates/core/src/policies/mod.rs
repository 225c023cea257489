//! The synchronization-switching decision layer.
//!
//! Protocol ordering and switch timing are expressed as a [`SwitchPlan`];
//! the timing comes either from the offline binary search over converged
//! accuracy ([`binary_search_timing`]), from the online straggler policies
//! (greedy and elastic), or from the gradient-delta criterion evaluated
//! during training. Hyper-parameters per protocol come from
//! [`config_policy`], with the learning-rate schedule remapped so decay
//! happens at the same workload position regardless of the switch fraction.

mod config;
mod dynamic;
mod plan;
mod remap;
mod search;
mod straggler;

pub use config::{config_policy, momentum_at, LrScaling, MomentumVariant};
pub use dynamic::{
    dynamic_switch_criterion, DynamicCriterionConfig, DynamicCriterionState,
};
pub use plan::{PlanPhase, Protocol, StragglerPolicy, SwitchPlan};
pub use remap::{remap_lr_schedule, RemappedSchedule};
pub use search::{
    binary_search_timing, SearchOutcome, SearchSession, TimingSearchConfig, TrainingResult,
};
pub use straggler::{
    detect_stragglers, elastic_policy_step, greedy_policy_step, ElasticAction, GreedyAction,
    StragglerDetector, StragglerDetectorConfig,
};

/// Errors from policy construction and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid policy configuration: {0}")]
    InvalidConfig(String),
    #[error("workload not exactly divisible: {0}")]
    Workload(String),
}
