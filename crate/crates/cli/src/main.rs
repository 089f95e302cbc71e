mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deeporder::config::{Config, ConfigError};
use deeporder::features::NormalizerMode;
use deeporder::harness::{CutPoint, ExperimentPlan, HarnessError, Strategy};
use deeporder::net::NetError;
use deeporder::prioritize::SelectionPolicy;
use deeporder::synth::Profile;

#[derive(Parser, Debug)]
#[command(name = "deeporder", version, about = "Learned test-case prioritization from CI execution logs")]
struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random stream (splits, augmentation, init, shuffles).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all written artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    plan: PlanArgs,
    #[command(subcommand)]
    command: Command,
}

/// Experiment settings shared by every subcommand that needs them.
#[derive(Args, Debug, Default)]
struct PlanArgs {
    /// Number of past cycles in each status window.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Window lengths compared by `history-study`, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    windows: Option<Vec<usize>>,
    /// Per-cycle time budget as a share of the cycle's total duration.
    #[arg(long, global = true, allow_negative_numbers = true)]
    budget_fraction: Option<f64>,
    /// Share of cycles used for training (time-based cut).
    #[arg(long, global = true, conflicts_with = "cut_cycle")]
    cut_fraction: Option<f64>,
    /// First evaluated cycle id.
    #[arg(long, global = true)]
    cut_cycle: Option<u32>,
    /// Strategies to replay, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    #[arg(long, global = true)]
    random_repetitions: Option<usize>,
    /// Retrain on all earlier cycles after every K evaluated cycles.
    #[arg(long, global = true, value_name = "K")]
    retrain_every: Option<usize>,
    /// `prefix` or `skip-and-continue`.
    #[arg(long, global = true)]
    selection: Option<SelectionPolicy>,
    /// `suite` or `frozen`.
    #[arg(long, global = true)]
    normalizer: Option<NormalizerMode>,
    #[arg(long, global = true)]
    no_augment: bool,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Minibatch size; 0 trains full-batch.
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Field delimiter of input logs.
    #[arg(long, global = true, default_value_t = ',')]
    delimiter: char,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a log and print its shape.
    Ingest {
        input: PathBuf,
        /// Also write the parsed log back out, sorted by cycle.
        #[arg(long)]
        normalized: bool,
    },
    /// Feature vectors with formula labels for cycles up to a cut.
    Label {
        input: PathBuf,
        /// Last cycle to include (default: all).
        #[arg(long)]
        through: Option<u32>,
    },
    /// Oversample failed feature vectors from a features CSV.
    Augment { features: PathBuf },
    /// Train a model on cycles up to a cut and save it.
    Train {
        input: PathBuf,
        #[arg(long)]
        through: Option<u32>,
    },
    /// Rank a suite by a saved model or by the formula.
    Prioritize {
        input: PathBuf,
        /// Model file from `train`; without it the formula ranks the suite.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Rank this cycle's tests on the history before it. Without it every
        /// known test is ranked for the cycle after the log ends.
        #[arg(long)]
        cycle: Option<u32>,
    },
    /// Pick a budget-feasible prefix of a prioritized suite.
    Select {
        prioritized: PathBuf,
        /// Budget in seconds.
        #[arg(long, allow_negative_numbers = true)]
        budget: f64,
    },
    /// Score an ordering against the verdicts recorded for one cycle.
    Evaluate {
        input: PathBuf,
        /// Test ids in execution order: an id per line or a CSV with a `test_id` column.
        #[arg(long)]
        order: PathBuf,
        #[arg(long)]
        cycle: u32,
    },
    /// Replay a log cycle by cycle and compare strategies.
    Replay {
        input: PathBuf,
        /// Print the published figures for this dataset next to the results.
        #[arg(long)]
        profile: Option<Profile>,
    },
    /// Compare window lengths on one or more logs.
    HistoryStudy {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Generate a synthetic log shaped like a public dataset.
    Synth {
        profile: Profile,
        /// Keep this share of the profile's tests.
        #[arg(long, default_value_t = 1.0)]
        test_fraction: f64,
        /// Fill the priority column with the formula's value.
        #[arg(long)]
        with_priorities: bool,
        /// Output file (default: OUT_DIR/<profile>.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare a recorded priority column with the formula and a model.
    CompareTruth {
        input: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

fn resolve_plan(config: Option<&PathBuf>, seed: Option<u64>, args: &PlanArgs) -> Result<ExperimentPlan, CliError> {
    let mut plan = match config {
        Some(path) => Config::load(path)?.into_plan()?,
        None => ExperimentPlan::default(),
    };
    if let Some(s) = seed {
        plan.seed = s;
    }
    if let Some(w) = args.window {
        plan.window_len = w;
    }
    if let Some(ws) = &args.windows {
        plan.history_windows = ws.clone();
    }
    if let Some(b) = args.budget_fraction {
        plan.budget_fraction = b;
    }
    if let Some(f) = args.cut_fraction {
        plan.cut = CutPoint::Fraction(f);
    }
    if let Some(c) = args.cut_cycle {
        plan.cut = CutPoint::Cycle(c);
    }
    if let Some(s) = &args.strategies {
        plan.strategies = s.clone();
    }
    if let Some(r) = args.random_repetitions {
        plan.random_repetitions = r;
    }
    if args.retrain_every.is_some() {
        plan.retrain_every = args.retrain_every;
    }
    if let Some(s) = args.selection {
        plan.selection = s;
    }
    if let Some(n) = args.normalizer {
        plan.normalizer = n;
    }
    if args.no_augment {
        plan.augment = None;
    }
    if let Some(e) = args.epochs {
        plan.train.epochs_max = e;
    }
    if let Some(b) = args.batch_size {
        plan.train.batch_size = (b > 0).then_some(b);
    }
    plan.validate().map_err(|e| CliError::Input(format!("invalid plan: {e}")))?;
    Ok(plan)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = resolve_plan(cli.config.as_ref(), cli.seed, &cli.plan).and_then(|plan| {
        let ctx = commands::Context {
            plan,
            out_dir: cli.out_dir.clone(),
            delimiter: cli.plan.delimiter,
        };
        commands::run(&ctx, cli.command)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
