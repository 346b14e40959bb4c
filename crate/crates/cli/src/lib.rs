//! Command-line front end for `fmsteer`.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
//! numerical breakdown (divergence or a non-finite training loss).

pub mod commands;
pub mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use fmsteer::ode::SolverMethod;
use serde::Serialize;

use crate::commands::ensure_dir;
use crate::config::RunConfig;

pub const METADATA_FILE: &str = "run_metadata.json";

#[derive(Debug, Parser)]
#[command(name = "fmsteer", version, about = "Flow-matching activation steering toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Euler,
    Dopri5,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the configured scenario's source.fsrp and target.fsrp.
    Synth(Common),
    /// Print per-dimension statistics of an FSRP file as JSON.
    Stats { file: PathBuf },
    /// Train a flow model on the fit split; writes model.fsck and training_log.csv.
    Train(Common),
    /// Transport an FSRP file along a trained flow; writes steered.fsrp.
    Steer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        eta: Option<f64>,
        /// Integrate the learned field alone, with no guidance term.
        #[arg(long)]
        unguided: bool,
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        #[arg(long)]
        euler_steps: Option<usize>,
        #[arg(long)]
        record_trajectory: bool,
    },
    /// Held-out before/linear/flow comparison; writes alignment_report.{json,csv}.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Use this model instead of training one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Drop diverged rows from the flow metrics instead of failing.
        #[arg(long)]
        skip_diverged: bool,
    },
    /// Normalization × loss × guidance grid; writes ablation_report.csv.
    Ablate(Common),
    /// Guidance-strength sweep; writes sweep_report.csv.
    Sweep(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Stats { .. } => "stats",
            Command::Train(_) => "train",
            Command::Steer { .. } => "steer",
            Command::Eval { .. } => "eval",
            Command::Ablate(_) => "ablate",
            Command::Sweep(_) => "sweep",
        }
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    args: Vec<String>,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    success: bool,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Loads the config and applies the output override, then creates the
/// output directory and persists the resolved config in it.
fn prepare(common: &Common, edit: impl FnOnce(&mut RunConfig)) -> Result<(RunConfig, PathBuf)> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default().resolved()?,
    };
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    edit(&mut config);
    let config = config.resolved()?;
    let dir = ensure_dir(&config.output.dir)?;
    config.write_resolved(&dir)?;
    Ok((config, dir))
}

/// Runs one command, recording its output directory (if it has one) so the
/// caller can write the metadata sidecar there.
fn execute(command: &Command, out_dir: &mut Option<PathBuf>) -> Result<()> {
    match command {
        Command::Synth(common) => {
            let (config, dir) = prepare(common, |_| {})?;
            *out_dir = Some(dir.clone());
            commands::cmd_synth(&config, &dir)
        }
        Command::Stats { file } => {
            print!("{}", commands::cmd_stats(file)?);
            Ok(())
        }
        Command::Train(common) => {
            let (config, dir) = prepare(common, |_| {})?;
            *out_dir = Some(dir.clone());
            commands::cmd_train(&config, &dir)
        }
        Command::Steer {
            common,
            checkpoint,
            input,
            eta,
            unguided,
            solver,
            euler_steps,
            record_trajectory,
        } => {
            let (config, dir) = prepare(common, |c| {
                if let Some(eta) = eta {
                    c.guidance.eta = *eta;
                }
                c.guidance.unguided |= *unguided;
                if let Some(s) = solver {
                    c.solver.method = match s {
                        SolverArg::Euler => SolverMethod::Euler,
                        SolverArg::Dopri5 => SolverMethod::Dopri5,
                    };
                }
                if let Some(n) = euler_steps {
                    c.solver.euler_steps = *n;
                }
                c.solver.record_trajectory |= *record_trajectory;
            })?;
            *out_dir = Some(dir.clone());
            commands::cmd_steer(&config.steer_options(), checkpoint, input, &dir).map(|_| ())
        }
        Command::Eval {
            common,
            checkpoint,
            skip_diverged,
        } => {
            let (config, dir) = prepare(common, |c| c.eval.skip_diverged |= *skip_diverged)?;
            *out_dir = Some(dir.clone());
            commands::cmd_eval(&config, checkpoint.as_deref(), &dir).map(|_| ())
        }
        Command::Ablate(common) => {
            let (config, dir) = prepare(common, |_| {})?;
            *out_dir = Some(dir.clone());
            commands::cmd_ablate(&config, &dir).map(|_| ())
        }
        Command::Sweep(common) => {
            let (config, dir) = prepare(common, |_| {})?;
            *out_dir = Some(dir.clone());
            commands::cmd_sweep(&config, &dir).map(|_| ())
        }
    }
}

pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    if commands::is_numerical(err) {
        2
    } else {
        1
    }
}

/// Runs a parsed command and maps the outcome to the exit-code contract,
/// reporting failures on standard error.
pub fn run(cli: Cli, args: Vec<String>) -> ExitCode {
    let started = now_ms();
    let mut out_dir = None;
    let result = execute(&cli.command, &mut out_dir);
    if let Some(dir) = out_dir {
        let meta = Metadata {
            command: cli.command.name(),
            version: env!("CARGO_PKG_VERSION"),
            args,
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
            success: result.is_ok(),
        };
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        if let Err(e) = std::fs::write(dir.join(METADATA_FILE), text + "\n") {
            eprintln!("warning: could not write {METADATA_FILE}: {e}");
        }
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
