//! Online straggler policies: detection plus the greedy and elastic
//! reactions.
//!
//! A worker is flagged when its windowed throughput stays below the cluster
//! mean minus one population standard deviation for a number of consecutive
//! detection windows. The greedy policy rides out stragglers on ASP and
//! returns to BSP once they clear; the elastic policy instead shrinks the
//! BSP cluster and restores it at the switch point.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{PolicyError, Protocol};

/// Detection window length and the persistence requirement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StragglerDetectorConfig {
    /// Sliding window length in simulated seconds.
    pub window_secs: f64,
    /// Consecutive flagged windows required before a worker is reported.
    pub consecutive_required: u32,
}

impl Default for StragglerDetectorConfig {
    fn default() -> Self {
        Self { window_secs: 30.0, consecutive_required: 3 }
    }
}

impl StragglerDetectorConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.window_secs > 0.0) {
            return Err(PolicyError::InvalidConfig("detector window must be > 0".into()));
        }
        if self.consecutive_required == 0 {
            return Err(PolicyError::InvalidConfig(
                "consecutive_required must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Single-window threshold check: worker k is below `S - sigma`, with S the
/// cluster mean and sigma the population standard deviation over the given
/// workers. Single-worker clusters never flag.
pub fn flag_below_mean_minus_sigma(throughputs: &BTreeMap<u32, f64>) -> BTreeSet<u32> {
    if throughputs.len() < 2 {
        return BTreeSet::new();
    }
    let n = throughputs.len() as f64;
    let mean = throughputs.values().sum::<f64>() / n;
    let var = throughputs.values().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    let threshold = mean - var.sqrt();
    throughputs.iter().filter(|(_, &t)| t < threshold).map(|(&w, _)| w).collect()
}

/// Tracks consecutive flagged windows per worker.
#[derive(Debug, Clone, Default)]
pub struct StragglerDetector {
    consecutive: BTreeMap<u32, u32>,
}

impl StragglerDetector {
    /// Feeds one detection window of per-worker throughputs; returns the
    /// workers flagged for `consecutive_required` windows in a row.
    pub fn observe(
        &mut self,
        throughputs: &BTreeMap<u32, f64>,
        cfg: &StragglerDetectorConfig,
    ) -> BTreeSet<u32> {
        let below = flag_below_mean_minus_sigma(throughputs);
        for worker in throughputs.keys() {
            if below.contains(worker) {
                *self.consecutive.entry(*worker).or_insert(0) += 1;
            } else {
                self.consecutive.remove(worker);
            }
        }
        // Workers absent from this window (e.g. removed) lose their streak.
        self.consecutive.retain(|w, _| throughputs.contains_key(w));
        self.consecutive
            .iter()
            .filter(|(_, &c)| c >= cfg.consecutive_required)
            .map(|(&w, _)| w)
            .collect()
    }

    pub fn reset(&mut self) {
        self.consecutive.clear();
    }
}

/// One-shot detection over a fixed history of windows (most recent last):
/// workers flagged in each of the trailing `consecutive_required` windows.
pub fn detect_stragglers(
    windows: &[BTreeMap<u32, f64>],
    cfg: &StragglerDetectorConfig,
) -> BTreeSet<u32> {
    let mut detector = StragglerDetector::default();
    let mut out = BTreeSet::new();
    for w in windows {
        out = detector.observe(w, cfg);
    }
    out
}

/// Greedy policy decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyAction {
    SwitchToAsp,
    SwitchToBsp,
    None,
}

/// Greedy reaction: stragglers during BSP force a switch to ASP; once the
/// cluster is clear and the BSP sample quota is still unmet, switch back.
/// After the quota is met the run is on ASP for good and ignores stragglers.
pub fn greedy_policy_step(
    current: Protocol,
    bsp_quota_met: bool,
    stragglers_present: bool,
) -> GreedyAction {
    match (current, stragglers_present, bsp_quota_met) {
        (Protocol::Bsp, true, false) => GreedyAction::SwitchToAsp,
        (Protocol::Asp, false, false) => GreedyAction::SwitchToBsp,
        _ => GreedyAction::None,
    }
}

/// Elastic policy decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElasticAction {
    /// Remove these workers from the BSP cluster.
    Remove(BTreeSet<u32>),
    /// BSP quota met: restore the full cluster and switch to ASP.
    RestoreAndSwitchToAsp,
    None,
}

/// Elastic reaction: during BSP, remove newly detected stragglers (never all
/// remaining workers); at the quota, restore the cluster and switch once.
/// Stragglers during ASP are tolerated.
pub fn elastic_policy_step(
    current: Protocol,
    bsp_quota_met: bool,
    stragglers: &BTreeSet<u32>,
    active: &BTreeSet<u32>,
) -> ElasticAction {
    if current != Protocol::Bsp {
        return ElasticAction::None;
    }
    if bsp_quota_met {
        return ElasticAction::RestoreAndSwitchToAsp;
    }
    let removable: BTreeSet<u32> = stragglers.intersection(active).copied().collect();
    if removable.is_empty() {
        return ElasticAction::None;
    }
    if removable.len() >= active.len() {
        // All remaining workers straggle; removal would empty the cluster.
        return ElasticAction::None;
    }
    ElasticAction::Remove(removable)
}
