use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hopper_core::harness::{self, describe_row, RunConfig};
use hopper_core::{Error, Result};

#[derive(Parser)]
#[command(name = "hopper", version, about = "Train and evaluate stabilizing policies for a tensegrity hopper")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults are used for anything missing.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Episode horizon in control steps.
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a linear policy with ARS.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Evaluate a checkpoint from the configured drop height.
    Eval {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        height: Option<f64>,
    },
    /// Survival time against initial drop height.
    SweepHeight {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_delimiter = ',')]
        heights: Option<Vec<f64>>,
    },
    /// Survival time against decision frequency (actions held for k control steps).
    SweepFrequency {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, value_delimiter = ',')]
        intervals: Option<Vec<u64>>,
    },
    /// One episode with a long horizon.
    LongHorizon {
        #[command(flatten)]
        eval: EvalArgs,
        /// Seconds of simulated time.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Per-step state dump of one episode.
    ExportTrajectory {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        height: Option<f64>,
    },
    /// Write a zero-weight checkpoint matching the configuration.
    ZeroCheckpoint {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn resolve(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.ars.seed = seed;
    }
    if let Some(workers) = common.workers {
        config.ars.workers = workers;
    }
    if let Some(horizon) = common.horizon {
        config.env.horizon_steps = horizon;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.env.validate()?;
    config.ars.validate()?;
    let out = config.output_dir.clone();
    Ok((config, out))
}

fn resolve_eval(eval: &EvalArgs) -> Result<(RunConfig, PathBuf)> {
    let (mut config, out) = resolve(&eval.common)?;
    if let Some(repeats) = eval.repeats {
        config.sweep.repeats = repeats;
    }
    Ok((config, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, iterations } => {
            let (mut config, out) = resolve(&common)?;
            if let Some(iterations) = iterations {
                config.ars.iterations = iterations;
            }
            let outcome = harness::cmd_train(&config, &out)?;
            if let Some(last) = outcome.log.records.last() {
                println!(
                    "iterations={} mean_return={} max_return={} faults={}",
                    last.iteration,
                    last.mean_return,
                    last.max_return,
                    outcome.log.total_faults()
                );
            }
            println!("checkpoint {}", outcome.checkpoint.display());
        }
        Command::Eval { eval, height } => {
            let (mut config, out) = resolve_eval(&eval)?;
            if let Some(height) = height {
                config.env.drop_height = height;
            }
            let table = harness::cmd_eval(&config, &eval.checkpoint, &out)?;
            for row in &table.rows {
                println!("{}", describe_row(table.parameter, row));
            }
        }
        Command::SweepHeight { eval, heights } => {
            let (mut config, out) = resolve_eval(&eval)?;
            if let Some(heights) = heights {
                config.sweep.heights = heights;
            }
            let table = harness::cmd_sweep_height(&config, &eval.checkpoint, &out)?;
            for row in &table.rows {
                println!("{}", describe_row(table.parameter, row));
            }
        }
        Command::SweepFrequency { eval, intervals } => {
            let (mut config, out) = resolve_eval(&eval)?;
            if let Some(intervals) = intervals {
                config.sweep.decision_intervals = intervals;
            }
            let table = harness::cmd_sweep_frequency(&config, &eval.checkpoint, &out)?;
            for row in &table.rows {
                println!("{}", describe_row(table.parameter, row));
            }
        }
        Command::LongHorizon { eval, duration } => {
            let (mut config, out) = resolve_eval(&eval)?;
            if let Some(duration) = duration {
                config.sweep.long_horizon_seconds = duration;
            }
            let outcome = harness::cmd_long_horizon(&config, &eval.checkpoint, &out)?;
            println!(
                "survived {}s of {}s (success={})",
                outcome.survived_s,
                outcome.duration_s,
                outcome.succeeded()
            );
        }
        Command::ExportTrajectory { eval, height } => {
            let (mut config, out) = resolve_eval(&eval)?;
            if let Some(height) = height {
                config.sweep.trajectory_height = height;
            }
            let result = harness::cmd_export_trajectory(&config, &eval.checkpoint, &out)?;
            println!(
                "{} control steps written to {}",
                result.control_steps,
                out.join(harness::TRAJECTORY_CSV).display()
            );
        }
        Command::ZeroCheckpoint { common, checkpoint } => {
            let (config, _) = resolve(&common)?;
            harness::write_zero_checkpoint(&config, &checkpoint)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Usage(_) | Error::Malformed { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
