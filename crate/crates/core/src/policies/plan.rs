//! The resolved training plan: protocol order, workload split, and the
//! online policies layered on top.

use serde::{Deserialize, Serialize};

use super::{DynamicCriterionConfig, PolicyError, StragglerDetectorConfig};

/// Parameter synchronization protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Bsp,
    Asp,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Protocol::Bsp => write!(f, "bsp"),
            Protocol::Asp => write!(f, "asp"),
        }
    }
}

/// One phase of the plan: a protocol and its share of the total workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanPhase {
    pub protocol: Protocol,
    pub fraction: f64,
}

/// Straggler reaction policy active during the BSP portion of the plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StragglerPolicy {
    #[default]
    None,
    Greedy,
    Elastic,
}

/// The complete switching plan. The default shape is
/// `[(BSP, s), (ASP, 1 - s)]`; fractions always sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchPlan {
    pub phases: Vec<PlanPhase>,
    #[serde(default)]
    pub straggler_policy: StragglerPolicy,
    #[serde(default)]
    pub straggler_detector: Option<StragglerDetectorConfig>,
    #[serde(default)]
    pub dynamic_criterion: Option<DynamicCriterionConfig>,
}

impl SwitchPlan {
    /// The default BSP-then-ASP plan at switch fraction `s`.
    pub fn bsp_then_asp(s: f64) -> Self {
        Self {
            phases: vec![
                PlanPhase { protocol: Protocol::Bsp, fraction: s },
                PlanPhase { protocol: Protocol::Asp, fraction: 1.0 - s },
            ],
            straggler_policy: StragglerPolicy::None,
            straggler_detector: None,
            dynamic_criterion: None,
        }
    }

    pub fn single(protocol: Protocol) -> Self {
        Self {
            phases: vec![PlanPhase { protocol, fraction: 1.0 }],
            straggler_policy: StragglerPolicy::None,
            straggler_detector: None,
            dynamic_criterion: None,
        }
    }

    /// Total workload fraction assigned to BSP phases.
    pub fn bsp_fraction(&self) -> f64 {
        self.phases
            .iter()
            .filter(|p| p.protocol == Protocol::Bsp)
            .map(|p| p.fraction)
            .sum()
    }

    /// True when the plan is the canonical `[BSP, ASP]` shape (possibly with
    /// a zero-length phase), which the online policies require.
    pub fn is_bsp_then_asp(&self) -> bool {
        self.phases.len() == 2
            && self.phases[0].protocol == Protocol::Bsp
            && self.phases[1].protocol == Protocol::Asp
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.phases.is_empty() {
            return Err(PolicyError::InvalidPlan("plan has no phases".into()));
        }
        for p in &self.phases {
            if !(0.0..=1.0).contains(&p.fraction) {
                return Err(PolicyError::InvalidPlan(format!(
                    "phase fraction {} outside [0, 1]",
                    p.fraction
                )));
            }
        }
        let sum: f64 = self.phases.iter().map(|p| p.fraction).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PolicyError::InvalidPlan(format!("phase fractions sum to {sum}, not 1")));
        }
        if self.phases.windows(2).any(|w| w[0].protocol == w[1].protocol) {
            return Err(PolicyError::InvalidPlan(
                "adjacent phases use the same protocol".into(),
            ));
        }
        if self.straggler_policy != StragglerPolicy::None && !self.is_bsp_then_asp() {
            return Err(PolicyError::InvalidPlan(
                "straggler policies require the [BSP, ASP] plan shape".into(),
            ));
        }
        if self.straggler_policy != StragglerPolicy::None && self.straggler_detector.is_none() {
            return Err(PolicyError::InvalidPlan(
                "straggler policies require a detector configuration".into(),
            ));
        }
        if self.dynamic_criterion.is_some() && !self.is_bsp_then_asp() {
            return Err(PolicyError::InvalidPlan(
                "the dynamic criterion requires the [BSP, ASP] plan shape".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape_validates() {
        let plan = SwitchPlan::bsp_then_asp(0.25);
        plan.validate().unwrap();
        assert!(plan.is_bsp_then_asp());
        assert_eq!(plan.bsp_fraction(), 0.25);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let plan = SwitchPlan {
            phases: vec![
                PlanPhase { protocol: Protocol::Bsp, fraction: 0.5 },
                PlanPhase { protocol: Protocol::Asp, fraction: 0.4 },
            ],
            straggler_policy: StragglerPolicy::None,
            straggler_detector: None,
            dynamic_criterion: None,
        };
        assert!(plan.validate().is_err());
    }

    #[test]
    fn straggler_policy_requires_canonical_shape() {
        let mut plan = SwitchPlan::single(Protocol::Asp);
        plan.straggler_policy = StragglerPolicy::Elastic;
        assert!(plan.validate().is_err());
    }
}
