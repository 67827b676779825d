use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use isac_cli::{cmd_check_grad, cmd_report, cmd_run, cmd_sweep, ModeChoice, Overrides};

#[derive(Parser)]
#[command(name = "isac", version, about = "Alpha-fair multistatic ISAC beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Multistatic,
    Monostatic,
    Both,
}

impl From<Mode> for ModeChoice {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Multistatic => ModeChoice::Multistatic,
            Mode::Monostatic => ModeChoice::Monostatic,
            Mode::Both => ModeChoice::Both,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Scenario seed, overrides `scenario.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { out: self.out.clone(), mode: self.mode.map(Into::into), seed: self.seed }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one configuration and write trace.csv, result.json and beams.csv.
    Run(Common),
    /// Run the configured parameter sweep and write sweep.csv.
    Sweep(Common),
    /// Compare analytic gradients with central differences.
    CheckGrad {
        #[arg(long)]
        config: PathBuf,
        /// Number of random states.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Scale one block of every analytic gradient by 1.01.
        #[arg(long, hide = true)]
        perturb_gradient: bool,
    },
    /// Summarize a run or sweep directory and write plotdata/.
    Report {
        /// Directory written by `run` or `sweep`.
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(c) => cmd_run(&c.config, &c.overrides()).map(|_| true),
        Command::Sweep(c) => cmd_sweep(&c.config, &c.overrides()).map(|_| true),
        Command::CheckGrad { config, samples, seed, perturb_gradient } => {
            cmd_check_grad(&config, samples, seed, perturb_gradient).map(|c| c.passed())
        }
        Command::Report { dir } => cmd_report(&dir).map(|text| {
            print!("{text}");
            true
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
