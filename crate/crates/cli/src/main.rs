use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use syncsim_cli::commands::{
    cmd_analyze, cmd_search, cmd_simulate, cmd_sweep, parse_settings, CommonOverrides,
};
use syncsim_cli::config::ExperimentConfig;
use syncsim_cli::{exit_codes, CliError};

/// Parameter-server synchronization simulator and experiment runner.
#[derive(Parser)]
#[command(name = "syncsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config repeat count.
    #[arg(long)]
    repeats: Option<u32>,
    /// Straggler preset override: none, mild, or moderate.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured plan and emit trace.csv + summary.json per repeat.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Use a previously emitted plan.json instead of plan.phases.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Derive the switch timing by binary search; emits search_log.csv and
    /// plan.json.
    Search {
        #[command(flatten)]
        common: Common,
    },
    /// Run a list of switch fractions and emit sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated BSP fractions in [0, 1].
        #[arg(long, value_delimiter = ',', required = true)]
        fractions: Vec<f64>,
        /// Also emit a BSP-first vs ASP-first comparison at the first
        /// fraction.
        #[arg(long)]
        order_compare: bool,
    },
    /// Replay the timing search over recorded session logs and price each
    /// search setting.
    Analyze {
        /// Directory containing search_log.csv.
        #[arg(long)]
        logs: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Semicolon-separated settings, each "recurring,bsp_runs,candidate_runs"
        /// (e.g. "no,5,5;yes,0,3").
        #[arg(long)]
        settings: String,
        /// Monte-Carlo trials per setting.
        #[arg(long, default_value_t = 1000)]
        trials: u32,
        /// Accuracy threshold (band half-width) for the replayed search.
        #[arg(long, default_value_t = 0.01)]
        threshold: f64,
        /// Number of bisection settings in the replayed search.
        #[arg(long, default_value_t = 4)]
        max_settings: u32,
        /// Root seed for the trial resampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Simulate { common, plan } => {
            let config = ExperimentConfig::from_path(&common.config)?;
            let plan_override = match plan {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| {
                        CliError::invalid(format!("cannot read plan {}: {e}", path.display()))
                    })?;
                    Some(serde_json::from_str(&text).map_err(|e| {
                        CliError::invalid(format!("invalid plan {}: {e}", path.display()))
                    })?)
                }
                None => None,
            };
            let overrides = CommonOverrides {
                seed: common.seed,
                repeats: common.repeats,
                preset: common.preset,
            };
            cmd_simulate(&config, plan_override, &common.out, &overrides)
        }
        Command::Search { common } => {
            let config = ExperimentConfig::from_path(&common.config)?;
            let overrides = CommonOverrides {
                seed: common.seed,
                repeats: common.repeats,
                preset: common.preset,
            };
            cmd_search(&config, &common.out, &overrides)
        }
        Command::Sweep { common, fractions, order_compare } => {
            let config = ExperimentConfig::from_path(&common.config)?;
            let overrides = CommonOverrides {
                seed: common.seed,
                repeats: common.repeats,
                preset: common.preset,
            };
            cmd_sweep(&config, &fractions, order_compare, &common.out, &overrides)
        }
        Command::Analyze { logs, out, settings, trials, threshold, max_settings, seed } => {
            let settings = parse_settings(&settings)?;
            cmd_analyze(&logs, &settings, trials, threshold, max_settings, seed, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code.clamp(1, exit_codes::COVERAGE) as u8)
        }
    }
}
