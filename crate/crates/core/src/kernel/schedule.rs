//! Piecewise-constant learning-rate schedule.

use serde::{Deserialize, Serialize};

/// Step-indexed decay schedule. Factors are multipliers on `base_lr`, not
/// cumulative: the factor of the largest boundary at or below the current
/// step applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LRSchedule {
    pub base_lr: f64,
    pub boundaries: Vec<u64>,
    pub factors: Vec<f64>,
}

impl LRSchedule {
    pub fn constant(base_lr: f64) -> Self {
        Self { base_lr, boundaries: vec![], factors: vec![] }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_lr > 0.0) {
            return Err("base_lr must be > 0".into());
        }
        if self.boundaries.len() != self.factors.len() {
            return Err("boundaries and factors must have equal length".into());
        }
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err("boundaries must be strictly ascending".into());
        }
        if self.factors.iter().any(|f| !(*f > 0.0)) {
            return Err("factors must be positive".into());
        }
        Ok(())
    }
}

/// Learning rate at `step`: `base_lr` before the first boundary, then
/// `base_lr * factors[i]` for the largest boundary <= step.
pub fn lr_at(schedule: &LRSchedule, step: u64) -> f64 {
    match schedule.boundaries.partition_point(|&b| b <= step) {
        0 => schedule.base_lr,
        i => schedule.base_lr * schedule.factors[i - 1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_schedule() -> LRSchedule {
        LRSchedule { base_lr: 0.1, boundaries: vec![32_000, 48_000], factors: vec![0.1, 0.01] }
    }

    #[test]
    fn base_before_first_boundary() {
        assert_eq!(lr_at(&paper_schedule(), 0), 0.1);
        assert_eq!(lr_at(&paper_schedule(), 31_999), 0.1);
    }

    #[test]
    fn boundary_is_inclusive() {
        assert_eq!(lr_at(&paper_schedule(), 32_000), 0.1 * 0.1);
    }

    #[test]
    fn last_factor_applies_to_tail() {
        assert_eq!(lr_at(&paper_schedule(), 63_999), 0.1 * 0.01);
    }

    #[test]
    fn non_increasing_step_function_for_sub_unit_factors() {
        let s = paper_schedule();
        let mut prev = f64::INFINITY;
        for step in (0..70_000).step_by(997) {
            let lr = lr_at(&s, step);
            assert!(lr <= prev);
            prev = lr;
        }
    }
}
