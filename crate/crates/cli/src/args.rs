use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Environment variable naming the root under which runs are written when
/// no output directory is given.
pub const OUTPUT_ROOT_ENV: &str = "NOWCAST_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "nowcast", version, about = "Bayesian nowcasting of delayed count data")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset with known truth.
    Simulate(SimulateArgs),
    /// Fit a model and write a run directory with posterior samples.
    Fit(FitArgs),
    /// Predict the totals of incomplete rows of a fitted run.
    Nowcast(NowcastArgs),
    /// Predict totals past the last row of a fitted run.
    Forecast(ForecastArgs),
    /// Posterior predictive checks of a fitted run.
    Check(CheckArgs),
    /// MPSRF and effective sample sizes of a fitted run.
    Diagnose(DiagnoseArgs),
    /// Choose the delay horizon from the proportions reported per delay.
    SelectDelay(SelectDelayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory. Defaults to `$NOWCAST_OUTPUT_ROOT/<command>` or
    /// `nowcast-runs/<command>`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,

    /// Root for default output directories.
    #[arg(long, env = OUTPUT_ROOT_ENV, hide_env_values = true)]
    pub output_root: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario document (TOML); the default desk scenario when absent.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Data and censoring settings shared by `fit` and `select-delay`.
#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Long CSV with `time_index,delay,count[,series]`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Series to use when the file holds several.
    #[arg(long)]
    pub series: Option<String>,
    /// Time index of the present day.
    #[arg(long)]
    pub present_day: Option<usize>,
    /// Delay after which a total is final.
    #[arg(long)]
    pub maturity: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Run configuration (TOML). Flags override its values.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// gdm, glm, glm_plus or gdm_ur.
    #[arg(long)]
    pub variant: Option<String>,
    /// Number of modelled delays `D`; later delays form the remainder.
    #[arg(long)]
    pub delay_horizon: Option<usize>,
    /// Sampler preset the other sampler settings start from: desk or paper.
    #[arg(long)]
    pub preset: Option<String>,
    /// Number of chains.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Iterations per chain, burn-in included.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Iterations discarded from the start of each chain.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Keep every n-th draw after burn-in.
    #[arg(long)]
    pub thin: Option<usize>,
    /// Base seed; chain seeds derive from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of chains.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Interval levels used by later commands, e.g. `0.5,0.95`.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Exit with status 3 when the MPSRF gate fails.
    #[arg(long)]
    pub strict: bool,
    /// Replace an existing run in the output directory.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Directory written by `fit`.
    #[arg(long)]
    pub run: PathBuf,
    /// Output directory; defaults to the run directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NowcastArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Interval levels; defaults to the run's configured levels.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuantityArg {
    Reported,
    True,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of steps past the last row.
    #[arg(long)]
    pub horizon: usize,
    /// Reported totals, or true counts under GDM-UR.
    #[arg(long, value_enum, default_value_t = QuantityArg::Reported)]
    pub quantity: QuantityArg,
    /// Interval levels; defaults to the run's configured levels.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Level of the proportion coverage intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Leave the remainder column out of the covariance statistics.
    #[arg(long)]
    pub exclude_remainder: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Exit with status 3 when the MPSRF gate fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SelectDelayArgs {
    /// Run configuration supplying the data settings.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Proportion of the total that must be reported.
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
    /// Quantile of the per-row proportions compared with the threshold.
    #[arg(long, default_value_t = 0.2)]
    pub quantile: f64,
    #[command(flatten)]
    pub out: OutArgs,
}
