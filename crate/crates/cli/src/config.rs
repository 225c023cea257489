//! Experiment configuration: a single JSON document with a strict schema.
//!
//! Unknown keys are hard errors so a typo in an experiment file cannot
//! silently fall back to a default. The named straggler presets expand to
//! scheduled injections on the last worker(s): "mild" is one occurrence of
//! 10 ms added latency, "moderate" is four occurrences of 30 ms alternating
//! across two workers, every occurrence capped at the 100 s transient
//! bound.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use syncsim::kernel::{Hyperparams, LRSchedule, ModelSpec};
use syncsim::policies::{
    DynamicCriterionConfig, LrScaling, MomentumVariant, PlanPhase, StragglerDetectorConfig,
    StragglerPolicy, SwitchPlan,
};
use syncsim::sim::{
    DataConfig, RunSpec, StragglerInjection, SwitchOverheadModel, WorkerProfile,
    DEFAULT_MAX_TRANSIENT_DURATION_S,
};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub workload: WorkloadConfig,
    pub cluster: ClusterConfig,
    pub plan: PlanConfig,
    #[serde(default)]
    pub stragglers: StragglerConfig,
    /// Defaults to the measured model for the cluster size when omitted.
    #[serde(default)]
    pub overhead: Option<OverheadConfig>,
    #[serde(default)]
    pub lr_scaling: LrScaling,
    #[serde(default)]
    pub momentum_variant: MomentumVariant,
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    /// Accuracy threshold for time-to-accuracy in summaries.
    #[serde(default)]
    pub tta_threshold: Option<f64>,
}

fn default_repeats() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub data_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub features: usize,
    pub classes: usize,
    /// Hidden width of the MLP; 0 selects the linear model.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub total_samples: u64,
    pub batch_size: u64,
    pub learning_rate: f64,
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// Decay boundaries in ASP-step coordinates (one step = one local
    /// batch), as a user would state them.
    #[serde(default)]
    pub lr_boundaries: Vec<u64>,
    #[serde(default)]
    pub lr_factors: Vec<f64>,
    #[serde(default = "default_eval_every")]
    pub eval_every_asp_steps: u64,
}

fn default_hidden() -> usize {
    32
}

fn default_eval_every() -> u64 {
    2000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub workers: u32,
    pub base_step_time_s: f64,
    pub base_net_latency_s: f64,
    #[serde(default)]
    pub jitter_sigma: f64,
    #[serde(default)]
    pub worker_overrides: Vec<WorkerOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkerOverride {
    pub worker_id: u32,
    #[serde(default)]
    pub base_step_time_s: Option<f64>,
    #[serde(default)]
    pub base_net_latency_s: Option<f64>,
    #[serde(default)]
    pub jitter_sigma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    /// Fixed protocol phases; omitted when the plan comes from a search.
    #[serde(default)]
    pub phases: Option<Vec<PlanPhase>>,
    #[serde(default)]
    pub straggler_policy: StragglerPolicy,
    #[serde(default)]
    pub straggler_detector: Option<StragglerDetectorConfig>,
    #[serde(default)]
    pub dynamic_criterion: Option<DynamicCriterionConfig>,
    #[serde(default)]
    pub search: Option<SearchSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    #[serde(default = "default_beta")]
    pub accuracy_threshold: f64,
    #[serde(default = "default_settings")]
    pub max_settings: u32,
    #[serde(default = "default_runs")]
    pub runs_per_setting: u32,
    #[serde(default)]
    pub target_accuracy: Option<f64>,
    /// Analytic accuracy curve for search-correctness tests; skips
    /// simulation entirely.
    #[serde(default)]
    pub stub_curve: Option<StubCurve>,
}

fn default_beta() -> f64 {
    0.01
}
fn default_settings() -> u32 {
    4
}
fn default_runs() -> u32 {
    5
}

/// Analytic stand-in for converged accuracy as a function of the BSP
/// percentage, with a linear session-cost model. The default cost
/// coefficients put the 4-setting, 5-run search at 12.71 BSP-equivalents
/// with a 19.5% relative cost at the 6.25% switch fraction, matching the
/// recorded search-cost analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubCurve {
    pub base: f64,
    pub slope_per_percent: f64,
    pub cap: f64,
    #[serde(default = "default_cost_intercept")]
    pub cost_intercept: f64,
    #[serde(default = "default_cost_slope")]
    pub cost_slope: f64,
}

fn default_cost_intercept() -> f64 {
    0.12572727272727272
}
fn default_cost_slope() -> f64 {
    1.1083636363636364
}

impl StubCurve {
    pub fn accuracy(&self, fraction: f64) -> f64 {
        (self.base + self.slope_per_percent * fraction * 100.0).min(self.cap)
    }

    pub fn cost(&self, fraction: f64) -> f64 {
        self.cost_intercept + self.cost_slope * fraction
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StragglerConfig {
    /// "none", "mild", or "moderate".
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub injections: Vec<StragglerInjection>,
    #[serde(default)]
    pub max_transient_duration_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverheadConfig {
    pub checkpoint_plus_restart_s: f64,
    pub cluster_init_s: f64,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::invalid(format!("invalid config {}: {e}", path.display())))?;
        Ok(config)
    }

    /// Stable hash of the canonicalized (parsed, re-serialized) config.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&canonical);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            features: self.workload.features,
            classes: self.workload.classes,
            hidden: self.workload.hidden,
        }
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            batch_size: self.workload.batch_size,
            learning_rate: self.workload.learning_rate,
            momentum: self.workload.momentum,
            weight_decay: self.workload.weight_decay,
            total_workload: self.workload.total_samples,
            lr_schedule: LRSchedule {
                base_lr: self.workload.learning_rate,
                boundaries: self.workload.lr_boundaries.clone(),
                factors: self.workload.lr_factors.clone(),
            },
        }
    }

    pub fn worker_profiles(&self) -> Result<Vec<WorkerProfile>, CliError> {
        let c = &self.cluster;
        if c.workers == 0 {
            return Err(CliError::invalid("cluster.workers must be >= 1"));
        }
        let mut profiles: Vec<WorkerProfile> = (0..c.workers)
            .map(|worker_id| WorkerProfile {
                worker_id,
                base_step_time_s: c.base_step_time_s,
                jitter_sigma: c.jitter_sigma,
                base_net_latency_s: c.base_net_latency_s,
            })
            .collect();
        for o in &c.worker_overrides {
            let Some(p) = profiles.get_mut(o.worker_id as usize) else {
                return Err(CliError::invalid(format!(
                    "cluster.worker_overrides: unknown worker {}",
                    o.worker_id
                )));
            };
            if let Some(v) = o.base_step_time_s {
                p.base_step_time_s = v;
            }
            if let Some(v) = o.base_net_latency_s {
                p.base_net_latency_s = v;
            }
            if let Some(v) = o.jitter_sigma {
                p.jitter_sigma = v;
            }
        }
        Ok(profiles)
    }

    pub fn overhead_model(&self) -> SwitchOverheadModel {
        match self.overhead {
            Some(o) => SwitchOverheadModel {
                checkpoint_plus_restart_s: o.checkpoint_plus_restart_s,
                cluster_init_s: o.cluster_init_s,
            },
            None => SwitchOverheadModel::for_cluster(self.cluster.workers),
        }
    }

    /// Expands the straggler section, applying a preset override from the
    /// command line when given.
    pub fn injections(&self, preset_override: Option<&str>) -> Result<Vec<StragglerInjection>, CliError> {
        let preset = match preset_override {
            Some(p) => Some(p.to_string()),
            None => self.stragglers.preset.clone(),
        };
        match preset.as_deref() {
            None | Some("none") => Ok(self.stragglers.injections.clone()),
            Some(name) => {
                if !self.stragglers.injections.is_empty() && preset_override.is_none() {
                    return Err(CliError::invalid(
                        "stragglers: give either a preset or explicit injections, not both",
                    ));
                }
                expand_preset(name, self.cluster.workers)
            }
        }
    }

    /// The plan used for plain simulation runs.
    pub fn switch_plan(&self) -> Result<SwitchPlan, CliError> {
        let Some(phases) = &self.plan.phases else {
            return Err(CliError::invalid(
                "plan.phases missing (run the search subcommand to derive a plan)",
            ));
        };
        Ok(SwitchPlan {
            phases: phases.clone(),
            straggler_policy: self.plan.straggler_policy,
            straggler_detector: self.plan.straggler_detector,
            dynamic_criterion: self.plan.dynamic_criterion,
        })
    }

    /// Builds the RunSpec for one repeat.
    pub fn run_spec(
        &self,
        plan: SwitchPlan,
        seed: u64,
        preset_override: Option<&str>,
    ) -> Result<RunSpec, CliError> {
        Ok(RunSpec {
            model: self.model_spec(),
            data: DataConfig {
                seed: self.workload.data_seed,
                n_train: self.workload.n_train,
                n_test: self.workload.n_test,
            },
            hyperparams: self.hyperparams(),
            plan,
            workers: self.worker_profiles()?,
            injections: self.injections(preset_override)?,
            overhead: self.overhead_model(),
            lr_scaling: self.lr_scaling,
            momentum_variant: self.momentum_variant,
            eval_every_asp_steps: self.workload.eval_every_asp_steps,
            max_transient_duration_s: self
                .stragglers
                .max_transient_duration_s
                .unwrap_or(DEFAULT_MAX_TRANSIENT_DURATION_S),
            seed,
        })
    }
}

/// Scenario expansion. Injections target the highest-numbered workers; the
/// occurrence schedule is fixed so scenario runs stay reproducible.
fn expand_preset(name: &str, workers: u32) -> Result<Vec<StragglerInjection>, CliError> {
    if workers < 2 {
        return Err(CliError::invalid("straggler presets need at least 2 workers"));
    }
    let last = workers - 1;
    match name {
        "mild" => Ok(vec![StragglerInjection {
            worker_id: last,
            onset_s: 120.0,
            duration_s: 100.0,
            added_latency_s: 0.010,
            compute_multiplier: 1.0,
        }]),
        "moderate" => {
            let second = workers - 2;
            let mk = |worker_id, onset_s| StragglerInjection {
                worker_id,
                onset_s,
                duration_s: 100.0,
                added_latency_s: 0.030,
                compute_multiplier: 1.0,
            };
            Ok(vec![
                mk(last, 120.0),
                mk(second, 225.0),
                mk(last, 330.0),
                mk(second, 435.0),
            ])
        }
        other => Err(CliError::invalid(format!(
            "unknown straggler preset {other:?} (expected none, mild, or moderate)"
        ))),
    }
}
