//! The simulate / search / sweep / analyze subcommands.

use std::fmt::Write as _;
use std::path::Path;

use syncsim::metrics::{
    monte_carlo_search, ConvergenceDetector, MetricsError, PooledSession, SearchSetting,
};
use syncsim::policies::{
    binary_search_timing, PlanPhase, Protocol, StragglerPolicy, SwitchPlan, TimingSearchConfig,
    TrainingResult,
};
use syncsim::sim::{run, RunStatus, RunTrace};

use crate::config::ExperimentConfig;
use crate::output::{atomic_write, fmt_f64, summarize, to_pretty_json, trace_csv};
use crate::{exit_codes, CliError};

/// Common knobs every subcommand accepts from the command line.
#[derive(Debug, Default, Clone)]
pub struct CommonOverrides {
    pub seed: Option<u64>,
    pub repeats: Option<u32>,
    pub preset: Option<String>,
}

fn effective(config: &ExperimentConfig, overrides: &CommonOverrides) -> (u64, u32) {
    (
        overrides.seed.unwrap_or(config.seed),
        overrides.repeats.unwrap_or(config.repeats).max(1),
    )
}

fn run_once(
    config: &ExperimentConfig,
    plan: SwitchPlan,
    seed: u64,
    preset: Option<&str>,
) -> Result<RunTrace, CliError> {
    let spec = config.run_spec(plan, seed, preset)?;
    run(&spec).map_err(|e| CliError::invalid(e.to_string()))
}

/// Runs the configured plan `repeats` times (seed, seed+1, ...), writing
/// trace.csv and summary.json per repeat. Returns a divergence exit code if
/// any repeat diverged.
pub fn cmd_simulate(
    config: &ExperimentConfig,
    plan_override: Option<SwitchPlan>,
    out: &Path,
    overrides: &CommonOverrides,
) -> Result<i32, CliError> {
    let (seed0, repeats) = effective(config, overrides);
    let plan = match plan_override {
        Some(p) => p,
        None => config.switch_plan()?,
    };
    let digest = config.digest();
    let mut any_diverged = false;
    for i in 0..repeats {
        let seed = seed0 + i as u64;
        let trace = run_once(config, plan.clone(), seed, overrides.preset.as_deref())?;
        any_diverged |= trace.status == RunStatus::Diverged;
        let (trace_name, summary_name) = if repeats == 1 {
            ("trace.csv".to_string(), "summary.json".to_string())
        } else {
            (format!("trace_{i:03}.csv"), format!("summary_{i:03}.json"))
        };
        atomic_write(&out.join(trace_name), &trace_csv(&trace))?;
        let summary = summarize(&trace, seed, &digest, config.tta_threshold);
        atomic_write(&out.join(summary_name), &to_pretty_json(&summary))?;
    }
    Ok(if any_diverged { exit_codes::DIVERGED } else { exit_codes::OK })
}

/// Session accuracy for search purposes: converged accuracy when the run
/// stabilized, the final accuracy when it completed without stabilizing,
/// and 0 for diverged runs (forcing the search toward more BSP).
fn session_accuracy(trace: &RunTrace) -> f64 {
    match trace.status {
        RunStatus::Diverged => 0.0,
        RunStatus::Completed => ConvergenceDetector::default()
            .detect(&trace.evals)
            .map(|c| c.accuracy)
            .unwrap_or(trace.final_accuracy),
    }
}

/// Derives the switch timing by binary search and emits search_log.csv and
/// the chosen plan as plan.json.
pub fn cmd_search(
    config: &ExperimentConfig,
    out: &Path,
    overrides: &CommonOverrides,
) -> Result<i32, CliError> {
    let Some(search) = &config.plan.search else {
        return Err(CliError::invalid("plan.search section missing"));
    };
    if config.plan.phases.is_some() {
        return Err(CliError::invalid(
            "plan.phases must be omitted when searching for the switch timing",
        ));
    }
    let cfg = TimingSearchConfig {
        accuracy_threshold: search.accuracy_threshold,
        max_settings: search.max_settings,
        runs_per_setting: search.runs_per_setting,
        target_accuracy: search.target_accuracy,
    };
    let (seed0, _) = effective(config, overrides);

    let outcome = if let Some(stub) = &search.stub_curve {
        let mut train = |fraction: f64, _r: u32| TrainingResult {
            accuracy: stub.accuracy(fraction),
            cost: stub.cost(fraction),
        };
        binary_search_timing(&mut train, &cfg)
    } else {
        let mut session = 0u64;
        let mut failure: Option<CliError> = None;
        let mut train = |fraction: f64, _r: u32| {
            let seed = seed0 + session;
            session += 1;
            let plan = SwitchPlan {
                phases: vec![
                    PlanPhase { protocol: Protocol::Bsp, fraction },
                    PlanPhase { protocol: Protocol::Asp, fraction: 1.0 - fraction },
                ],
                straggler_policy: StragglerPolicy::None,
                straggler_detector: None,
                dynamic_criterion: None,
            };
            match run_once(config, plan, seed, overrides.preset.as_deref()) {
                Ok(trace) => TrainingResult {
                    accuracy: session_accuracy(&trace),
                    cost: trace.total_time_s,
                },
                Err(e) => {
                    if failure.is_none() {
                        failure = Some(e);
                    }
                    TrainingResult { accuracy: 0.0, cost: 0.0 }
                }
            }
        };
        let outcome = binary_search_timing(&mut train, &cfg);
        if let Some(e) = failure {
            return Err(e);
        }
        outcome
    }
    .map_err(|e| CliError::invalid(e.to_string()))?;

    let mut log = String::from("fraction,run_index,accuracy,cost\n");
    for s in &outcome.sessions {
        let _ = writeln!(
            log,
            "{},{},{},{}",
            fmt_f64(s.fraction),
            s.run_index,
            fmt_f64(s.accuracy),
            fmt_f64(s.cost)
        );
    }
    atomic_write(&out.join("search_log.csv"), &log)?;

    let plan = SwitchPlan {
        phases: vec![
            PlanPhase { protocol: Protocol::Bsp, fraction: outcome.fraction },
            PlanPhase { protocol: Protocol::Asp, fraction: 1.0 - outcome.fraction },
        ],
        straggler_policy: config.plan.straggler_policy,
        straggler_detector: config.plan.straggler_detector,
        dynamic_criterion: config.plan.dynamic_criterion,
    };
    atomic_write(&out.join("plan.json"), &to_pretty_json(&plan))?;
    Ok(exit_codes::OK)
}

/// Runs each switch fraction `repeats` times and emits sweep.csv with the
/// per-fraction mean converged accuracy, its spread, and the mean total
/// time.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    fractions: &[f64],
    order_compare: bool,
    out: &Path,
    overrides: &CommonOverrides,
) -> Result<i32, CliError> {
    if fractions.is_empty() {
        return Err(CliError::invalid("sweep needs at least one fraction"));
    }
    for f in fractions {
        if !(0.0..=1.0).contains(f) {
            return Err(CliError::invalid(format!("sweep fraction {f} outside [0, 1]")));
        }
    }
    let (seed0, repeats) = effective(config, overrides);

    let plan_for = |fraction: f64, bsp_first: bool| -> SwitchPlan {
        let (first, second) =
            if bsp_first { (Protocol::Bsp, Protocol::Asp) } else { (Protocol::Asp, Protocol::Bsp) };
        SwitchPlan {
            phases: vec![
                PlanPhase { protocol: first, fraction },
                PlanPhase { protocol: second, fraction: 1.0 - fraction },
            ],
            straggler_policy: config.plan.straggler_policy,
            straggler_detector: config.plan.straggler_detector,
            dynamic_criterion: config.plan.dynamic_criterion,
        }
    };

    let stats = |plan_fraction: f64, bsp_first: bool, seed_base: u64| -> Result<(f64, f64, f64), CliError> {
        let mut accs = Vec::with_capacity(repeats as usize);
        let mut times = Vec::with_capacity(repeats as usize);
        for r in 0..repeats {
            let trace = run_once(
                config,
                plan_for(plan_fraction, bsp_first),
                seed_base + r as u64,
                overrides.preset.as_deref(),
            )?;
            accs.push(session_accuracy(&trace));
            times.push(trace.total_time_s);
        }
        let n = accs.len() as f64;
        let mean = accs.iter().sum::<f64>() / n;
        let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let mean_time = times.iter().sum::<f64>() / n;
        Ok((mean, var.sqrt(), mean_time))
    };

    let mut csv = String::from("fraction,mean_accuracy,stddev,mean_time\n");
    for (i, &fraction) in fractions.iter().enumerate() {
        let (mean, sd, time) = stats(fraction, true, seed0 + (i as u64) * repeats as u64)?;
        let _ = writeln!(csv, "{},{},{},{}", fmt_f64(fraction), fmt_f64(mean), fmt_f64(sd), fmt_f64(time));
    }
    atomic_write(&out.join("sweep.csv"), &csv)?;

    if order_compare {
        // Two-row protocol-ordering comparison at the first fraction.
        let fraction = fractions[0];
        let mut csv = String::from("order,mean_accuracy,stddev,mean_time\n");
        for (label, bsp_first) in [("bsp_first", true), ("asp_first", false)] {
            let (mean, sd, time) = stats(fraction, bsp_first, seed0)?;
            let _ =
                writeln!(csv, "{label},{},{},{}", fmt_f64(mean), fmt_f64(sd), fmt_f64(time));
        }
        atomic_write(&out.join("order_compare.csv"), &csv)?;
    }
    Ok(exit_codes::OK)
}

/// Parses "no,5,5;yes,0,3"-style setting lists.
pub fn parse_settings(text: &str) -> Result<Vec<SearchSetting>, CliError> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|triple| {
            let parts: Vec<&str> = triple.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(CliError::invalid(format!(
                    "setting {triple:?} is not (recurring, bsp_runs, candidate_runs)"
                )));
            }
            let recurring = match parts[0].to_ascii_lowercase().as_str() {
                "yes" | "true" => true,
                "no" | "false" => false,
                other => {
                    return Err(CliError::invalid(format!(
                        "setting recurrence {other:?} must be yes or no"
                    )))
                }
            };
            let bsp_runs: u32 = parts[1]
                .parse()
                .map_err(|_| CliError::invalid(format!("bad bsp_runs in {triple:?}")))?;
            let candidate_runs: u32 = parts[2]
                .parse()
                .map_err(|_| CliError::invalid(format!("bad candidate_runs in {triple:?}")))?;
            Ok(SearchSetting { recurring, bsp_runs, candidate_runs })
        })
        .collect()
}

fn read_session_pool(dir: &Path) -> Result<Vec<PooledSession>, CliError> {
    let path = dir.join("search_log.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut pool = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(CliError::invalid(format!(
                "{}:{}: expected 4 columns",
                path.display(),
                lineno + 1
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64, CliError> {
            s.parse::<f64>().map_err(|_| {
                CliError::invalid(format!("{}:{}: bad {what} {s:?}", path.display(), lineno + 1))
            })
        };
        pool.push(PooledSession {
            fraction: parse(cols[0], "fraction")?,
            accuracy: parse(cols[2], "accuracy")?,
            cost: parse(cols[3], "cost")?,
        });
    }
    if pool.is_empty() {
        return Err(CliError::invalid(format!("{}: no sessions", path.display())));
    }
    Ok(pool)
}

/// Replays the search over recorded sessions for each setting and writes
/// cost_report.csv.
pub fn cmd_analyze(
    logs: &Path,
    settings: &[SearchSetting],
    trials: u32,
    threshold: f64,
    max_settings: u32,
    seed: u64,
    out: &Path,
) -> Result<i32, CliError> {
    if settings.is_empty() {
        return Err(CliError::invalid("analyze needs at least one setting"));
    }
    let pool = read_session_pool(logs)?;
    let mut csv = String::from("setting,cost,amortization,effective,success_probability\n");
    for setting in settings {
        let report = monte_carlo_search(&pool, *setting, trials, threshold, max_settings, seed)
            .map_err(|e| match e {
                MetricsError::Coverage(_) => {
                    CliError { exit_code: exit_codes::COVERAGE, message: e.to_string() }
                }
                other => CliError::invalid(other.to_string()),
            })?;
        let label = format!(
            "{}-{}-{}",
            if setting.recurring { "yes" } else { "no" },
            setting.bsp_runs,
            setting.candidate_runs
        );
        let amort = match report.amortization {
            Some(a) => fmt_f64(a),
            None => "inf".to_string(),
        };
        let _ = writeln!(
            csv,
            "{label},{},{amort},{},{}",
            fmt_f64(report.search_cost),
            fmt_f64(report.effective_training),
            fmt_f64(report.success_probability)
        );
    }
    atomic_write(&out.join("cost_report.csv"), &csv)?;
    Ok(exit_codes::OK)
}
