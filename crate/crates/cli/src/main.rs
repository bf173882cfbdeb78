//! `slonn`: generate artifacts, fit activators, profile latency, and serve
//! or benchmark queries under accuracy and latency targets.
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 3 when a
//! single `infer` query cannot meet its SLO, 1 on any other failure.

mod commands;
mod opts;

use std::fmt;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

use opts::Opts;

#[derive(Parser, Debug)]
#[command(name = "slonn", version, about = "SLO-aware dynamic node dropout for ReLU networks")]
struct Cli {
    #[command(flatten)]
    opts: Opts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded random ReLU model.
    GenModel(commands::GenModelArgs),
    /// Write a clustered synthetic classification dataset.
    GenData(commands::GenDataArgs),
    /// Train node-importance tables, then confidence tables, then calibrate.
    Fit(commands::FitArgs),
    /// Measure the latency profile over the k grid per scenario.
    Profile(commands::ProfileArgs),
    /// Serve a single query and print the result as JSON.
    Infer(commands::InferArgs),
    /// Serve a stream of queries and report per-query records and aggregates.
    Bench(commands::BenchArgs),
    /// Ranked vs random top-k accuracy over the k grid.
    SweepK,
    /// Achieved accuracy and speedup per accuracy target.
    SweepAclo(commands::SweepAcloArgs),
    /// Achieved accuracy and SLO violations per latency target and scenario.
    SweepLcao(commands::SweepLcaoArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenModel(_) => "gen-model",
            Command::GenData(_) => "gen-data",
            Command::Fit(_) => "fit",
            Command::Profile(_) => "profile",
            Command::Infer(_) => "infer",
            Command::Bench(_) => "bench",
            Command::SweepK => "sweep-k",
            Command::SweepAclo(_) => "sweep-aclo",
            Command::SweepLcao(_) => "sweep-lcao",
        }
    }
}

/// A bad flag value or config file; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A flag the subcommand needs was neither given nor set by the config.
#[derive(Debug)]
pub struct MissingFlag(pub &'static str);

impl fmt::Display for MissingFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "the following required argument was not provided: {}", self.0)
    }
}

impl std::error::Error for MissingFlag {}

/// How a successful command wants the process to exit.
pub enum Outcome {
    Done,
    Infeasible,
}

fn set_thread_cap() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("SLONN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("SLONN_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    set_thread_cap()?;
    let opts = cli.opts.resolve()?;
    match cli.command {
        Command::GenModel(a) => commands::gen_model(&opts, &a),
        Command::GenData(a) => commands::gen_data(&opts, &a),
        Command::Fit(a) => commands::fit(&opts, &a),
        Command::Profile(a) => commands::profile(&opts, &a),
        Command::Infer(a) => commands::infer(&opts, &a),
        Command::Bench(a) => commands::bench(&opts, &a),
        Command::SweepK => commands::sweep_k(&opts),
        Command::SweepAclo(a) => commands::sweep_aclo(&opts, &a),
        Command::SweepLcao(a) => commands::sweep_lcao(&opts, &a),
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<UsageError>()
            || matches!(
                c.downcast_ref::<slonn_core::Error>(),
                Some(slonn_core::Error::Config(_))
            )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => ExitCode::from(3),
        Err(e) => {
            if let Some(m) = e.downcast_ref::<MissingFlag>() {
                let mut cmd = Cli::command();
                cmd.build();
                let sub = cmd.find_subcommand_mut(name).expect("subcommand exists");
                sub.error(ErrorKind::MissingRequiredArgument, m.to_string()).exit();
            }
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
