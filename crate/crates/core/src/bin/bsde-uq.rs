//! Command-line front end. Exit status: 0 on success, 1 when a run or model
//! diverged (artifacts are still written), 2 on usage or configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use deep_bsde_uq::experiments::{
    cmd_error_study, cmd_eval_uq, cmd_gen, cmd_normality, cmd_solve, cmd_train_uq, load_config, Outcome,
    RunOptions,
};
use deep_bsde_uq::Result;

#[derive(Parser)]
#[command(name = "bsde-uq", version, about = "Deep BSDE solver with uncertainty quantification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config for the subcommand.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            out: self.out.clone(),
            seed: self.seed,
            workers: self.workers,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem with an ensemble of independent runs.
    Solve(Common),
    /// Error of Y0 and Z0 across training, for a sweep of settings.
    ErrorStudy(Common),
    /// Generate (or resume) a dataset of ensemble solutions.
    Gen(Common),
    /// Train heteroscedastic UQ models on a generated dataset.
    TrainUq(Common),
    /// Evaluate trained UQ models on a dataset split.
    EvalUq(Common),
    /// Histogram and normal fit of ensemble solutions.
    Normality(Common),
}

fn run<T: DeserializeOwned>(
    common: &Common,
    cmd: impl FnOnce(&T, &RunOptions) -> Result<Outcome>,
) -> Result<Outcome> {
    let config: T = load_config(Path::new(&common.config))?;
    cmd(&config, &common.options())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(c) => run(c, cmd_solve),
        Command::ErrorStudy(c) => run(c, cmd_error_study),
        Command::Gen(c) => run(c, cmd_gen),
        Command::TrainUq(c) => run(c, cmd_train_uq),
        Command::EvalUq(c) => run(c, cmd_eval_uq),
        Command::Normality(c) => run(c, cmd_normality),
    };
    match outcome {
        Ok(o) => {
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            println!("{}", o.summary);
            if o.diverged {
                eprintln!("warning: divergence detected");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_divergence() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
