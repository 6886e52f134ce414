use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vodsim::cli::{self, ScenarioConfig, StrategySelection};
use vodsim::metrics;
use vodsim::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_INTERNAL: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "vodsim",
    version,
    about = "Partitioned VoD server blocking simulator"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the base-load scenario.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the load levels and write CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare single-partition simulation against Erlang-B.
    CompareAnalytic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        tolerance: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Uncontrolled,
    Policy,
    Both,
}

impl From<StrategyArg> for StrategySelection {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Uncontrolled => StrategySelection::Uncontrolled,
            StrategyArg::Policy => StrategySelection::Policy,
            StrategyArg::Both => StrategySelection::Both,
        }
    }
}

enum Failure {
    Sim(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Sim(e)
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(cli::parse_config(&text)?)
}

fn write_out(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn execute(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Run {
            config,
            seed,
            strategy,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(strategy) = strategy {
                cfg.strategy = strategy.into();
                // re-check weights now that a policy may run
                cfg.strategies()?;
            }
            println!("{cfg}");
            let points = cli::run_base(&cfg)?;
            print!("{}", cli::summary(&points, cfg.threshold));
            if let Some(out) = out {
                write_out(&out, &metrics::to_csv(&points))?;
            }
            Ok(true)
        }
        Command::Sweep { config, out } => {
            let cfg = load_config(&config)?;
            println!("{cfg}");
            let points = cli::run_sweep(&cfg)?;
            print!("{}", cli::summary(&points, cfg.threshold));
            write_out(&out, &metrics::to_csv(&points))?;
            Ok(true)
        }
        Command::CompareAnalytic { config, tolerance } => {
            let cfg = load_config(&config)?;
            let report = cli::compare_analytic(&cfg, tolerance)?;
            println!("{report}");
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
        Err(Failure::Sim(e)) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_INTERNAL)
            }
        }
    }
}
