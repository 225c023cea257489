//! Offline switch-timing search.
//!
//! Converged accuracy increases monotonically with the share of BSP
//! training while total time shrinks with more ASP, so the smallest
//! acceptable BSP share is found by bisection: a midpoint whose mean
//! converged accuracy lands within the threshold band around the target
//! becomes the new upper bound, otherwise it becomes the lower bound. The
//! search runs exactly `max_settings` midpoints of `runs_per_setting`
//! sessions each, plus the BSP baseline runs when no target accuracy is
//! supplied.

use serde::{Deserialize, Serialize};

use super::PolicyError;

/// Search parameters: threshold band, settings budget, repetitions, and the
/// optional known target accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSearchConfig {
    /// Accuracy threshold (band half-width) around the target.
    pub accuracy_threshold: f64,
    /// Number of midpoint settings to explore.
    pub max_settings: u32,
    /// Training sessions per setting.
    pub runs_per_setting: u32,
    /// Target converged accuracy; measured from BSP baselines when absent.
    #[serde(default)]
    pub target_accuracy: Option<f64>,
}

impl Default for TimingSearchConfig {
    fn default() -> Self {
        Self {
            accuracy_threshold: 0.01,
            max_settings: 4,
            runs_per_setting: 5,
            target_accuracy: None,
        }
    }
}

impl TimingSearchConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.accuracy_threshold > 0.0) {
            return Err(PolicyError::InvalidConfig("accuracy_threshold must be > 0".into()));
        }
        if self.max_settings == 0 || self.runs_per_setting == 0 {
            return Err(PolicyError::InvalidConfig(
                "max_settings and runs_per_setting must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one training session during the search. Diverged sessions
/// report accuracy 0, which fails the threshold band and pushes the search
/// toward more BSP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingResult {
    pub accuracy: f64,
    /// Session cost in the caller's units (simulated seconds here).
    pub cost: f64,
}

/// One logged session: the switch fraction trained, the run index within
/// its setting, and the session's accuracy and cost. Baseline BSP sessions
/// log fraction 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSession {
    pub fraction: f64,
    pub run_index: u32,
    pub accuracy: f64,
    pub cost: f64,
    pub baseline: bool,
}

/// The chosen switch fraction plus the full session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub fraction: f64,
    pub target_accuracy: f64,
    pub settings_visited: Vec<f64>,
    pub sessions: Vec<SearchSession>,
}

/// Bisection over the BSP fraction in [0, 1].
///
/// `train` maps (switch fraction, run index within the setting) to a
/// session result; it is called `runs_per_setting` times per midpoint and,
/// when no target accuracy is configured, `runs_per_setting` times at
/// fraction 1 first to measure the target.
pub fn binary_search_timing(
    train: &mut dyn FnMut(f64, u32) -> TrainingResult,
    cfg: &TimingSearchConfig,
) -> Result<SearchOutcome, PolicyError> {
    cfg.validate()?;
    let mut sessions = Vec::new();

    let target = match cfg.target_accuracy {
        Some(a) => a,
        None => {
            let mut sum = 0.0;
            for r in 0..cfg.runs_per_setting {
                let res = train(1.0, r);
                sessions.push(SearchSession {
                    fraction: 1.0,
                    run_index: r,
                    accuracy: res.accuracy,
                    cost: res.cost,
                    baseline: true,
                });
                sum += res.accuracy;
            }
            sum / cfg.runs_per_setting as f64
        }
    };

    let (mut lower, mut upper) = (0.0f64, 1.0f64);
    let mut visited = Vec::with_capacity(cfg.max_settings as usize);
    for _ in 0..cfg.max_settings {
        let mid = (lower + upper) / 2.0;
        visited.push(mid);
        let mut sum = 0.0;
        for r in 0..cfg.runs_per_setting {
            let res = train(mid, r);
            sessions.push(SearchSession {
                fraction: mid,
                run_index: r,
                accuracy: res.accuracy,
                cost: res.cost,
                baseline: false,
            });
            sum += res.accuracy;
        }
        let mean = sum / cfg.runs_per_setting as f64;
        if (target - cfg.accuracy_threshold..=target + cfg.accuracy_threshold).contains(&mean) {
            upper = mid;
        } else {
            lower = mid;
        }
    }

    Ok(SearchOutcome { fraction: upper, target_accuracy: target, settings_visited: visited, sessions })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The analytic accuracy curve used for search-correctness checks:
    /// saturating in the BSP percentage.
    fn stub_curve(fraction: f64) -> f64 {
        (0.86 + 0.24 * (fraction * 100.0)).min(0.92)
    }

    #[test]
    fn saturating_curve_returns_smallest_visited_fraction() {
        let cfg = TimingSearchConfig {
            accuracy_threshold: 0.01,
            max_settings: 4,
            runs_per_setting: 1,
            target_accuracy: Some(0.92),
        };
        let mut train = |s: f64, _r: u32| TrainingResult { accuracy: stub_curve(s), cost: 1.0 };
        let out = binary_search_timing(&mut train, &cfg).unwrap();
        assert_eq!(out.settings_visited, vec![0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(out.fraction, 0.0625);

        // Exhaustive evaluation of the curve on the 2^-M grid: 0.0625 is the
        // smallest visited fraction whose accuracy lands in the band.
        let in_band =
            |s: f64| (stub_curve(s) - 0.92).abs() <= 0.01;
        let smallest_visited_in_band = out
            .settings_visited
            .iter()
            .copied()
            .filter(|&s| in_band(s))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(smallest_visited_in_band, 0.0625);
    }

    #[test]
    fn all_reject_collapses_toward_pure_bsp() {
        let cfg = TimingSearchConfig {
            accuracy_threshold: 0.01,
            max_settings: 5,
            runs_per_setting: 1,
            target_accuracy: Some(0.92),
        };
        // Below threshold everywhere except s = 1.
        let mut train =
            |s: f64, _r: u32| TrainingResult { accuracy: if s >= 1.0 { 0.92 } else { 0.5 }, cost: 1.0 };
        let out = binary_search_timing(&mut train, &cfg).unwrap();
        assert!(out.fraction >= 1.0 - 2f64.powi(-5));
    }

    #[test]
    fn all_accept_returns_finest_grid_point() {
        let cfg = TimingSearchConfig {
            accuracy_threshold: 0.01,
            max_settings: 4,
            runs_per_setting: 1,
            target_accuracy: Some(0.92),
        };
        let mut train = |_s: f64, _r: u32| TrainingResult { accuracy: 0.92, cost: 1.0 };
        let out = binary_search_timing(&mut train, &cfg).unwrap();
        assert_eq!(out.fraction, 2f64.powi(-4));
    }

    #[test]
    fn session_count_is_baselines_plus_settings_times_runs() {
        for r in [1u32, 3, 5] {
            let cfg = TimingSearchConfig {
                accuracy_threshold: 0.01,
                max_settings: 4,
                runs_per_setting: r,
                target_accuracy: None,
            };
            let mut calls = 0u32;
            let mut train = |s: f64, _r: u32| {
                calls += 1;
                TrainingResult { accuracy: stub_curve(s), cost: 1.0 }
            };
            let out = binary_search_timing(&mut train, &cfg).unwrap();
            assert_eq!(calls, r + 4 * r);
            assert_eq!(out.sessions.len() as u32, r + 4 * r);
            assert_eq!(out.sessions.iter().filter(|s| s.baseline).count() as u32, r);
        }
    }

    #[test]
    fn diverged_sessions_score_zero_and_reject() {
        let cfg = TimingSearchConfig {
            accuracy_threshold: 0.01,
            max_settings: 3,
            runs_per_setting: 1,
            target_accuracy: Some(0.9),
        };
        // Training diverges (accuracy 0) for any fraction below 0.5.
        let mut train = |s: f64, _r: u32| TrainingResult {
            accuracy: if s < 0.5 { 0.0 } else { 0.9 },
            cost: 1.0,
        };
        let out = binary_search_timing(&mut train, &cfg).unwrap();
        // 0.5 accepts, 0.25 and 0.375 reject: the search keeps 0.5.
        assert_eq!(out.settings_visited, vec![0.5, 0.25, 0.375]);
        assert_eq!(out.fraction, 0.5);
    }

    /// Replays bisection on the dyadic grid using exhaustively precomputed
    /// accept/reject outcomes and checks the search visits exactly that
    /// sequence.
    #[test]
    fn visits_match_grid_bisection_oracle() {
        for curve_seed in 0..20u64 {
            // Random monotone step curve on the 2^-5 grid.
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(curve_seed);
            let knee: f64 = rng.gen_range(0.0..1.0);
            let curve = move |s: f64| if s >= knee { 0.92 } else { 0.80 };

            let cfg = TimingSearchConfig {
                accuracy_threshold: 0.01,
                max_settings: 5,
                runs_per_setting: 1,
                target_accuracy: Some(0.92),
            };
            let mut train = |s: f64, _r: u32| TrainingResult { accuracy: curve(s), cost: 1.0 };
            let out = binary_search_timing(&mut train, &cfg).unwrap();

            // Oracle: bisection replay from the accept predicate alone.
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut expect = Vec::new();
            for _ in 0..5 {
                let mid = (lo + hi) / 2.0;
                expect.push(mid);
                if (curve(mid) - 0.92).abs() <= 0.01 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert_eq!(out.settings_visited, expect, "curve seed {curve_seed}");
            assert_eq!(out.fraction, hi);
        }
    }
}
