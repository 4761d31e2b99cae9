mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ergoflow::error::Error;

/// Optimal finite-time work extraction under norm-constrained control.
///
/// Times on the command line are in units of 1/ω unless --absolute-time is
/// given. Reported times are always absolute.
#[derive(Parser, Debug)]
#[command(name = "ergoflow", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Solver configuration file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output file; standard output when absent. A run manifest is written
    /// next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Read time arguments as absolute times instead of multiples of 1/ω.
    #[arg(long, global = true)]
    pub absolute_time: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.0)]
    pub t_min: f64,
    #[arg(long)]
    pub t_max: f64,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Numeric,
    Su2Analytic,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the self-consistent equation at one protocol time.
    Solve {
        scenario: PathBuf,
        #[arg(long = "time", short = 'T')]
        t: f64,
        /// Write a JSON-lines trace of the descent here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Optimal work over a time grid.
    Curve {
        scenario: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value = "numeric")]
        backend: BackendArg,
    },
    /// Work curve of an SU(n)-Hubbard instance through its reduced problem.
    Hubbard {
        spec: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Also solve in the full Fock space and compare.
        #[arg(long)]
        validate_full: bool,
    },
    /// Optimal expectation of an observable over a time grid.
    Fidelity {
        objective: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Compare the solver against direct piecewise-constant optimization.
    Oracle {
        scenario: PathBuf,
        #[arg(long = "time", short = 'T')]
        t: f64,
        #[arg(long, default_value_t = 8)]
        segments: usize,
        #[arg(long, default_value_t = 16)]
        attempts: usize,
    },
    /// Closed-form optimum for an su(2) control algebra.
    Analytic {
        scenario: PathBuf,
        #[arg(long = "time", short = 'T')]
        t: Option<f64>,
    },
}

/// A failed run: exit code and message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CONVERGENCE: u8 = 3;
pub const EXIT_ORACLE: u8 = 4;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NoConvergence(_) | Error::PartialCurve { .. } | Error::PlateauNotReached | Error::Numerical(_) => {
                EXIT_CONVERGENCE
            }
            _ => EXIT_INPUT,
        };
        Failure { code, message: e.to_string() }
    }
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, message: message.into() }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("ERGOFLOW_LOG")).init();
    let cli = Cli::parse();
    let threads = cli.common.jobs;
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match pool.install(|| dispatch(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let ctx = commands::Context::new(&cli.common)?;
    match &cli.command {
        Command::Solve { scenario, t, trace } => ctx.solve(scenario, *t, trace.as_deref()),
        Command::Curve { scenario, grid, backend } => ctx.curve(scenario, grid, *backend),
        Command::Hubbard { spec, grid, validate_full } => ctx.hubbard(spec, grid, *validate_full),
        Command::Fidelity { objective, grid } => ctx.fidelity(objective, grid),
        Command::Oracle { scenario, t, segments, attempts } => ctx.oracle(scenario, *t, *segments, *attempts),
        Command::Analytic { scenario, t } => ctx.analytic(scenario, *t),
    }
}
