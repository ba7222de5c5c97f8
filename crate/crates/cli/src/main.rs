//! `arhmm` command line: estimation, filtering, goodness of fit, simulation, hedging and
//! backtesting with reproducible seeds.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use arhmm::hedge::{OptionKind, RegimePolicy};

#[derive(Debug, Parser)]
#[command(
    name = "arhmm",
    version,
    about = "Autoregressive hidden Markov models for returns and option hedging"
)]
pub struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, env = "ARHMM_OUTPUT_DIR", default_value = ".")]
    pub output_dir: PathBuf,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model by EM and test it against its autoregression-free version.
    Estimate(EstimateArgs),
    /// Filtered regime probabilities and the most probable regime per date.
    Filter(FilterArgs),
    /// Parametric-bootstrap goodness-of-fit test, optionally selecting the regime count.
    Gof(GofArgs),
    /// Simulate returns and regimes from a model.
    Simulate(SimulateArgs),
    /// Build optimal-hedging tables and store them in the table cache.
    HedgeTables(TablesArgs),
    /// Simulated hedging study comparing optimal and delta hedging.
    HedgeSim(HedgeSimArgs),
    /// Run hedging strategies over option quotes and realized returns.
    Backtest(BacktestArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Returns CSV: date and one column per dimension.
    pub returns: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub regimes: usize,
    /// Fit the model without autoregression first.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub warm_start: bool,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    pub returns: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct GofArgs {
    pub returns: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub regimes: usize,
    #[arg(long, default_value_t = 1000)]
    pub nboot: usize,
    /// Test 1, 2, ... up to this many regimes and select the first accepted count.
    #[arg(long)]
    pub lmax: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub steps: usize,
    /// Discarded steps after the stationary start.
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Call,
    Put,
}

impl From<Kind> for OptionKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Call => OptionKind::Call,
            Kind::Put => OptionKind::Put,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Policy {
    MostProbable,
    Known,
    Weighted,
}

impl From<Policy> for RegimePolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::MostProbable => RegimePolicy::MostProbable,
            Policy::Known => RegimePolicy::Known,
            Policy::Weighted => RegimePolicy::Weighted,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Nodes in the lagged-return grid.
    #[arg(long, default_value_t = 101)]
    pub ny: usize,
    /// Nodes in the discounted-price grid, including 0 and the strike.
    #[arg(long, default_value_t = 201)]
    pub ns: usize,
    /// Guaranteed grid half-width in stationary standard deviations.
    #[arg(long, default_value_t = 5.0)]
    pub coverage: f64,
    /// Simulations behind the grid percentiles.
    #[arg(long, default_value_t = 20_000)]
    pub grid_sims: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ContractArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Hedging periods to maturity.
    #[arg(long, default_value_t = 63)]
    pub steps: usize,
    #[arg(long, default_value_t = 100.0)]
    pub strike: f64,
    #[arg(long, default_value_t = 100.0)]
    pub spot: f64,
    /// Annual continuously compounded rate; one period is 1/252 year.
    #[arg(long, default_value_t = 0.01)]
    pub rate: f64,
    #[arg(long, value_enum, default_value_t = Kind::Call)]
    pub kind: Kind,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    #[command(flatten)]
    pub contract: ContractArgs,
}

#[derive(Debug, Args)]
pub struct HedgeSimArgs {
    #[command(flatten)]
    pub contract: ContractArgs,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, value_enum, default_value_t = Policy::MostProbable)]
    pub policy: Policy,
    /// Also hedge with this autoregression-free model (OH-HMM column).
    #[arg(long)]
    pub hmm_model: Option<PathBuf>,
    /// Per-period delta-hedge volatility; defaults to the model's stationary volatility.
    #[arg(long)]
    pub bs_vol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Quotes CSV: date,kind,strike,maturity_days,mid,underlying_close.
    #[arg(long)]
    pub quotes: PathBuf,
    /// Returns CSV: date,logret.
    #[arg(long)]
    pub returns: PathBuf,
    /// Trailing returns per fit.
    #[arg(long, default_value_t = 500)]
    pub window: usize,
    #[arg(long, default_value_t = 3)]
    pub regimes: usize,
    /// Comma-separated strategies: bs-m, bs, oh-bs, oh-hmm, oh-arhmm.
    #[arg(long, default_value = "bs-m,bs,oh-bs,oh-hmm,oh-arhmm")]
    pub strategies: String,
    /// Inclusive strike/underlying band at inception, as LOW:HIGH.
    #[arg(long, default_value = "0.9:1.1")]
    pub moneyness_band: String,
    /// Annual rate for discounting the put-call spread, also the fallback carry rate.
    #[arg(long, default_value_t = 0.0)]
    pub parity_rate: f64,
    #[arg(long, value_enum, default_value_t = Policy::MostProbable)]
    pub policy: Policy,
    /// Report in quote units instead of units of an underlying normalized to 100.
    #[arg(long)]
    pub quote_units: bool,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[command(flatten)]
    pub grid: GridArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(64),
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
