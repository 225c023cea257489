//! Deterministic simulation of parameter-server distributed SGD.
//!
//! The crate is organized around a small seeded training kernel and a
//! discrete-event engine that drives it through BSP/ASP synchronization
//! protocols:
//!
//! - [`kernel`]: synthetic dataset, MLP/linear model, momentum SGD and the
//!   piecewise learning-rate schedule.
//! - [`protocols`]: the BSP barrier and ASP immediate-apply state machines
//!   with version/staleness bookkeeping and logical parameter sharding.
//! - [`sim`]: the event loop in virtual time — worker timing, straggler
//!   injection, protocol switches with checkpoint/restore overhead, and
//!   elastic cluster resizing.
//! - [`policies`]: protocol ordering and switch timing (offline binary
//!   search, online greedy/elastic straggler policies, the gradient-delta
//!   criterion) plus per-protocol hyper-parameter configuration and
//!   learning-rate schedule remapping.
//! - [`metrics`]: converged accuracy, time-to-accuracy, speedups, and the
//!   Monte-Carlo search-cost analysis.
//!
//! Every run is a pure function of its inputs: identical configuration and
//! seed produce bit-identical traces.

pub mod kernel;
pub mod metrics;
pub mod policies;
pub mod protocols;
pub mod sim;
