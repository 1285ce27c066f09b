mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{FitArgs, FitMethod};
use settings::{ConfigError, Mode, RunFlags, Settings};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(version, about = "Rogue-wave statistics of disordered quantum walks on a ring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One disorder realization: record, events, histogram and block maxima
    Evolve(RunFlags),
    /// Many realizations: merged histograms, block maxima and event statistics
    Ensemble(RunFlags),
    /// Event fraction against disorder, optionally over several ring sizes
    Sweep(RunFlags),
    /// Refit stored block maxima or sweep curves
    Fit {
        /// block_maxima.csv from evolve or ensemble
        #[arg(long, value_name = "CSV", conflicts_with = "sweep")]
        block_maxima: Option<PathBuf>,
        /// sweep.json from sweep
        #[arg(long, value_name = "JSON")]
        sweep: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        method: FitMethod,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run the built-in oracle and invariant checks
    Selfcheck {
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
}

enum Failure {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        // parameter errors raised by the library still point at a flag
        match e.downcast::<roguewalk::Error>() {
            Ok(core) => match settings::from_core(core) {
                Ok(cfg) => Failure::Config(cfg),
                Err(core) => Failure::Runtime(core.into()),
            },
            Err(e) => Failure::Runtime(e),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Evolve(flags) => commands::evolve(&Settings::resolve(&flags, Mode::Evolve)?)?,
        Command::Ensemble(flags) => commands::ensemble(&Settings::resolve(&flags, Mode::Ensemble)?)?,
        Command::Sweep(flags) => commands::sweep(&Settings::resolve(&flags, Mode::Sweep)?)?,
        Command::Fit {
            block_maxima,
            sweep,
            method,
            flags,
        } => {
            if block_maxima.is_none() && sweep.is_none() {
                return Err(ConfigError::new("block-maxima", "give --block-maxima <CSV> or --sweep <JSON>").into());
            }
            let settings = Settings::resolve(&flags, Mode::Ensemble)?;
            let args = FitArgs {
                block_maxima: block_maxima.as_deref(),
                sweep: sweep.as_deref(),
                method,
            };
            commands::fit(&settings, args)?
        }
        Command::Selfcheck { out_dir } => {
            if !commands::selfcheck(out_dir.as_deref())? {
                return Err(Failure::Runtime(anyhow::anyhow!("selfcheck failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
