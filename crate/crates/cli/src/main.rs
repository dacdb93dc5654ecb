use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use compdlm::commands::{self, Overrides};
use compdlm::{Error, ErrorKind};

/// Compositional dynamic linear models for counterfactual forecasting.
#[derive(Parser)]
#[command(name = "compdlm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the Monte Carlo sample count per time step.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a damped linear growth panel with an intervention shock.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Counterfactual and outcome-adaptive forecasts, effects and lift.
    Causal {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hi/Lo labels from a singular value decomposition of a unit x time panel.
    Stratify {
        #[arg(long)]
        data: PathBuf,
        /// 1-based factor index.
        #[arg(long, default_value_t = 2)]
        factor: usize,
        /// Output CSV of unit,label,loading.
        #[arg(long)]
        out: PathBuf,
        /// Also write per-group mean series here.
        #[arg(long)]
        means: Option<PathBuf>,
    },
    /// Plain multivariate filter with one-step forecast diagnostics.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn overrides(c: &Common) -> Overrides {
    Overrides { seed: c.seed, samples: c.samples }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Error> {
    match cli.command {
        Command::Simulate { common, out } => {
            let cfg = commands::load_config(common.config.as_deref(), &overrides(&common))?;
            commands::cmd_simulate(&cfg, &out)
        }
        Command::Causal { common, data, out } => {
            let cfg = commands::load_config(common.config.as_deref(), &overrides(&common))?;
            commands::cmd_causal(&cfg, &data, &out)
        }
        Command::Stratify { data, factor, out, means } => commands::cmd_stratify(&data, factor, &out, means.as_deref()),
        Command::Filter { common, data, out } => {
            let cfg = commands::load_config(common.config.as_deref(), &overrides(&common))?;
            commands::cmd_filter(&cfg, &data, &out)
        }
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 3,
        ErrorKind::Data => 4,
        ErrorKind::Numerical => 5,
        ErrorKind::Io => 6,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
