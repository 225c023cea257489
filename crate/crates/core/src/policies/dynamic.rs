//! Gradient-delta switching criterion.
//!
//! The extra error from training on stale gradients is estimated by
//! `delta_i = g_i - g_{i-k}`, the change in the batch gradient over k steps.
//! The baseline error of fresh gradients in that direction is the sample
//! standard deviation
//! `sigma_i = 1/(B*||delta||) * sqrt(sum_xi [delta^T (grad_xi - g_i)]^2)`.
//! The switch fires once `||delta_i|| < c * sigma_i` has held for T
//! consecutive evaluations.

use serde::{Deserialize, Serialize};

use super::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicCriterionConfig {
    /// Step gap k between the compared batch gradients.
    pub step_gap: u32,
    /// Multiplier c on the fresh-gradient error estimate; must exceed 1.
    pub multiplier: f64,
    /// Consecutive satisfactions T required before firing.
    pub consecutive_required: u32,
}

impl Default for DynamicCriterionConfig {
    fn default() -> Self {
        Self { step_gap: 1, multiplier: 2.0, consecutive_required: 5 }
    }
}

impl DynamicCriterionConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.step_gap == 0 {
            return Err(PolicyError::InvalidConfig("step_gap must be >= 1".into()));
        }
        if !(self.multiplier > 1.0) {
            return Err(PolicyError::InvalidConfig("multiplier must be > 1".into()));
        }
        if self.consecutive_required == 0 {
            return Err(PolicyError::InvalidConfig(
                "consecutive_required must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Evaluates the criterion for one step.
///
/// Returns (satisfied, ||delta||, sigma). `per_sample_grads` are the
/// gradients of the individual samples in the batch behind `current`; a
/// zero-length delta counts as satisfied (no change is maximally
/// stale-tolerant).
pub fn dynamic_switch_criterion(
    current: &[f64],
    lagged: &[f64],
    per_sample_grads: &[Vec<f64>],
    multiplier: f64,
) -> Result<(bool, f64, f64), PolicyError> {
    if current.len() != lagged.len() {
        return Err(PolicyError::InvalidConfig(
            "current and lagged gradients differ in length".into(),
        ));
    }
    let b = per_sample_grads.len();
    if b < 2 {
        return Err(PolicyError::InvalidConfig(
            "criterion needs a batch of at least 2 per-sample gradients".into(),
        ));
    }
    let delta: Vec<f64> = current.iter().zip(lagged).map(|(c, l)| c - l).collect();
    let delta_norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
    if delta_norm == 0.0 {
        return Ok((true, 0.0, 0.0));
    }
    let mut sum_sq = 0.0;
    for g in per_sample_grads {
        if g.len() != current.len() {
            return Err(PolicyError::InvalidConfig(
                "per-sample gradient length mismatch".into(),
            ));
        }
        let proj: f64 = delta.iter().zip(g.iter().zip(current)).map(|(d, (gi, c))| d * (gi - c)).sum();
        sum_sq += proj * proj;
    }
    let sigma = sum_sq.sqrt() / (b as f64 * delta_norm);
    Ok((delta_norm < multiplier * sigma, delta_norm, sigma))
}

/// Stateful wrapper: lag buffer plus the consecutive-satisfaction counter.
#[derive(Debug, Clone)]
pub struct DynamicCriterionState {
    cfg: DynamicCriterionConfig,
    history: Vec<Vec<f64>>,
    streak: u32,
}

impl DynamicCriterionState {
    pub fn new(cfg: DynamicCriterionConfig) -> Self {
        Self { cfg, history: Vec::new(), streak: 0 }
    }

    /// Feeds the batch gradient of the latest step; returns true once the
    /// criterion has fired.
    pub fn observe(
        &mut self,
        batch_grad: &[f64],
        per_sample_grads: &[Vec<f64>],
    ) -> Result<bool, PolicyError> {
        let k = self.cfg.step_gap as usize;
        let fired = if self.history.len() >= k {
            let lagged = &self.history[self.history.len() - k];
            let (satisfied, _, _) = dynamic_switch_criterion(
                batch_grad,
                lagged,
                per_sample_grads,
                self.cfg.multiplier,
            )?;
            if satisfied {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
            self.streak >= self.cfg.consecutive_required
        } else {
            false
        };
        self.history.push(batch_grad.to_vec());
        if self.history.len() > k + 1 {
            self.history.remove(0);
        }
        Ok(fired)
    }
}
