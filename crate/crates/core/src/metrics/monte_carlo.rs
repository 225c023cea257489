//! Monte-Carlo pricing of search settings over a pool of recorded sessions.
//!
//! Each trial replays the timing search, drawing that many sessions with
//! replacement from the pool at every fraction the search visits. A trial
//! succeeds when it returns the same fraction as the ground truth — the
//! result of the baseline search evaluated on the full pool (per-fraction
//! means). Costs are normalized to the pool's mean BSP session time.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::policies::{binary_search_timing, TimingSearchConfig, TrainingResult};

/// One recorded training session available for resampling. BSP baseline
/// sessions carry fraction 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledSession {
    pub fraction: f64,
    pub accuracy: f64,
    pub cost: f64,
}

/// A search scenario: whether the job is recurring (target accuracy already
/// known), how many BSP baselines to train, and how many sessions per
/// candidate setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSetting {
    pub recurring: bool,
    pub bsp_runs: u32,
    pub candidate_runs: u32,
}

impl SearchSetting {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.candidate_runs == 0 {
            return Err(MetricsError::InvalidInput("candidate_runs must be >= 1".into()));
        }
        if !self.recurring && self.bsp_runs == 0 {
            return Err(MetricsError::InvalidInput(
                "non-recurring settings need at least one BSP baseline run".into(),
            ));
        }
        Ok(())
    }
}

/// Aggregate cost/performance of one search setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub setting: SearchSetting,
    /// Mean search cost over trials, in multiples of one BSP training.
    pub search_cost: f64,
    /// Recurrences to repay the search; `None` when it never amortizes.
    pub amortization: Option<f64>,
    /// Valid sessions produced per BSP-training-equivalent of search cost.
    pub effective_training: f64,
    /// Fraction of trials that returned the ground-truth switch fraction.
    pub success_probability: f64,
    pub ground_truth_fraction: f64,
    pub sessions_produced: u64,
}

struct Pool<'a> {
    by_fraction: Vec<(u64, Vec<&'a PooledSession>)>,
}

impl<'a> Pool<'a> {
    fn new(sessions: &'a [PooledSession]) -> Self {
        let mut by_fraction: Vec<(u64, Vec<&PooledSession>)> = Vec::new();
        for s in sessions {
            let key = s.fraction.to_bits();
            match by_fraction.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(s),
                None => by_fraction.push((key, vec![s])),
            }
        }
        Self { by_fraction }
    }

    fn bucket(&self, fraction: f64) -> Result<&[&'a PooledSession], MetricsError> {
        self.by_fraction
            .iter()
            .find(|(k, _)| *k == fraction.to_bits())
            .map(|(_, v)| v.as_slice())
            .ok_or(MetricsError::Coverage(fraction))
    }

    fn mean(&self, fraction: f64) -> Result<(f64, f64), MetricsError> {
        let bucket = self.bucket(fraction)?;
        let n = bucket.len() as f64;
        let acc = bucket.iter().map(|s| s.accuracy).sum::<f64>() / n;
        let cost = bucket.iter().map(|s| s.cost).sum::<f64>() / n;
        Ok((acc, cost))
    }
}

/// Simulates `trials` searches under `setting`, resampling the recorded
/// pool, and reports mean cost, amortization, effective training, and the
/// probability of recovering the ground-truth fraction.
pub fn monte_carlo_search(
    sessions: &[PooledSession],
    setting: SearchSetting,
    trials: u32,
    accuracy_threshold: f64,
    max_settings: u32,
    seed: u64,
) -> Result<CostReport, MetricsError> {
    setting.validate()?;
    if trials == 0 {
        return Err(MetricsError::InvalidInput("trials must be >= 1".into()));
    }
    let pool = Pool::new(sessions);
    let (bsp_mean_acc, bsp_mean_cost) = pool.mean(1.0)?;
    if !(bsp_mean_cost > 0.0) {
        return Err(MetricsError::InvalidInput("BSP sessions must have positive cost".into()));
    }

    // Ground truth: the search on per-fraction pool means, targeting the
    // mean BSP accuracy.
    let gt_cfg = TimingSearchConfig {
        accuracy_threshold,
        max_settings,
        runs_per_setting: 1,
        target_accuracy: Some(bsp_mean_acc),
    };
    let mut coverage: Result<(), MetricsError> = Ok(());
    let mut gt_train = |fraction: f64, _r: u32| match pool.mean(fraction) {
        Ok((acc, cost)) => TrainingResult { accuracy: acc, cost },
        Err(e) => {
            if coverage.is_ok() {
                coverage = Err(e);
            }
            TrainingResult { accuracy: 0.0, cost: 0.0 }
        }
    };
    let ground_truth = binary_search_timing(&mut gt_train, &gt_cfg)
        .map_err(|e| MetricsError::InvalidInput(e.to_string()))?
        .fraction;
    coverage?;

    let mut successes = 0u64;
    let mut total_cost = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
        let mut trial_cost = 0.0f64;
        let draw = |fraction: f64, rng: &mut ChaCha8Rng| -> Result<TrainingResult, MetricsError> {
            let bucket = pool.bucket(fraction)?;
            let s = bucket[rng.gen_range(0..bucket.len())];
            Ok(TrainingResult { accuracy: s.accuracy, cost: s.cost })
        };

        // Target accuracy: known for recurring jobs; measured from bsp_runs
        // sampled baselines otherwise (their cost counts).
        let target = if setting.recurring {
            bsp_mean_acc
        } else {
            let mut sum = 0.0;
            for _ in 0..setting.bsp_runs {
                let res = draw(1.0, &mut rng)?;
                trial_cost += res.cost;
                sum += res.accuracy;
            }
            sum / setting.bsp_runs as f64
        };

        let cfg = TimingSearchConfig {
            accuracy_threshold,
            max_settings,
            runs_per_setting: setting.candidate_runs,
            target_accuracy: Some(target),
        };
        let mut coverage: Result<(), MetricsError> = Ok(());
        let mut train = |fraction: f64, _r: u32| match draw(fraction, &mut rng) {
            Ok(res) => {
                trial_cost += res.cost;
                res
            }
            Err(e) => {
                if coverage.is_ok() {
                    coverage = Err(e);
                }
                TrainingResult { accuracy: 0.0, cost: 0.0 }
            }
        };
        let outcome = binary_search_timing(&mut train, &cfg)
            .map_err(|e| MetricsError::InvalidInput(e.to_string()))?;
        coverage?;

        if outcome.fraction.to_bits() == ground_truth.to_bits() {
            successes += 1;
        }
        total_cost += trial_cost;
    }

    let search_cost = total_cost / trials as f64 / bsp_mean_cost;
    let sessions_produced =
        (if setting.recurring { 0 } else { setting.bsp_runs } as u64)
            + max_settings as u64 * setting.candidate_runs as u64;
    let (_, gt_cost) = pool.mean(ground_truth)?;
    let relative_cost = gt_cost / bsp_mean_cost;
    let amort = match super::amortization(search_cost, relative_cost)
        .map_err(|e| MetricsError::InvalidInput(e.to_string()))?
    {
        super::Amortization::Recurrences(r) => Some(r),
        super::Amortization::Never => None,
    };

    Ok(CostReport {
        setting,
        search_cost,
        amortization: amort,
        effective_training: sessions_produced as f64 / search_cost,
        success_probability: successes as f64 / trials as f64,
        ground_truth_fraction: ground_truth,
        sessions_produced,
    })
}
