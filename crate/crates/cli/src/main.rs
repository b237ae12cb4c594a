//! `ctxforge`: train, evaluate and inspect context-training runs.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

mod commands;
mod config;
mod run;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ctxforge::store::DetailLevel;
use ctxforge::training::TrainMode;

use crate::commands::{EvalArgs, InspectArgs, Split, View};
use crate::config::UsageError;
use crate::run::TrainArgs;

#[derive(Parser)]
#[command(name = "ctxforge", version, about = "Train an agent's context instead of its weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run best-of-n, sequential or beam-search training into a fresh run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override `train.mode` (bon, seq, beam).
        #[arg(long)]
        mode: Option<TrainMode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue the run already in the output directory.
        #[arg(long)]
        resume: bool,
        /// Scenario fixture directory for the scripted backend.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Run directory; must not exist unless --resume.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a branch or commit on a held-out dataset and write a report.
    Eval {
        run: PathBuf,
        #[arg(long, default_value = "best")]
        target: String,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Dataset file (one JSON task per line) instead of a configured split.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        metric: Option<String>,
        /// Report path; defaults to <run>/reports/.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show branches, history, context contents or the training trajectory.
    Inspect {
        run: PathBuf,
        #[arg(value_enum)]
        what: View,
        /// Branch or commit; defaults to the checked-out head.
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value = "summary")]
        detail: DetailLevel,
    },
    /// Write a committed context as a snapshot document.
    Export {
        run: PathBuf,
        #[arg(long, default_value = "best")]
        target: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Commit a snapshot document onto a branch.
    Import {
        run: PathBuf,
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        branch: String,
        #[arg(long)]
        message: Option<String>,
    },
    /// Write a simulated scenario's fixtures and a ready-to-run config.
    Scenario {
        /// local_optima, pollution, budget or random_<seed>.
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, mode, seed, resume, fixtures, out } => run::cmd_train(TrainArgs {
            config,
            mode,
            seed,
            resume,
            fixtures,
            out,
        }),
        Command::Eval { run, target, split, dataset, metric, out } => commands::cmd_eval(EvalArgs {
            run,
            target,
            split,
            dataset,
            metric,
            out,
        }),
        Command::Inspect { run, what, target, detail } => commands::cmd_inspect(InspectArgs {
            run,
            what,
            target,
            detail,
        }),
        Command::Export { run, target, out } => commands::cmd_export(&run, &target, out.as_deref()),
        Command::Import { run, file, branch, message } => commands::cmd_import(&run, &file, &branch, message),
        Command::Scenario { name, out } => commands::cmd_scenario(&name, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
