//! Command-line front end. Exit codes: 0 success, 2 configuration error,
//! 3 stage failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::config::ExperimentConfig;
use super::pipeline::{Pipeline, Stage, StageStatus};
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "prompt", about = "Prediction-guided co-scheduling experiments on a simulated node")]
pub struct Cli {
    /// Experiment config (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Run counter selection on the decoy-padded catalog.
    SelectFeatures,
    /// Collect the profiling dataset.
    Collect,
    /// Train the two-level QoS predictor.
    TrainPredictor,
    /// Leave-one-mix-out evaluation, two-level and one-level.
    EvalPredictor,
    /// Train the learned controllers for every evaluation seed.
    TrainAgent,
    /// Run every controller on the held-out BE profiles.
    Evaluate,
    /// Aggregate evaluation logs into comparison tables.
    Compare,
    /// Write per-controller time series for plotting.
    EmitPlots,
}

impl Command {
    pub fn stage(self) -> Stage {
        match self {
            Command::SelectFeatures => Stage::SelectFeatures,
            Command::Collect => Stage::Collect,
            Command::TrainPredictor => Stage::TrainPredictor,
            Command::EvalPredictor => Stage::EvalPredictor,
            Command::TrainAgent => Stage::TrainAgent,
            Command::Evaluate => Stage::Evaluate,
            Command::Compare => Stage::Compare,
            Command::EmitPlots => Stage::EmitPlots,
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let pipeline = match Pipeline::new(cfg) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let stage = cli.command.stage();
    match pipeline.run(stage) {
        Ok(status) => {
            let what = match status {
                StageStatus::Ran => "done",
                StageStatus::UpToDate => "up to date",
            };
            println!("{stage}: {what} ({})", pipeline.stage_dir(stage).display());
            if stage == Stage::Compare {
                if let Ok(summary) = pipeline.load_comparison() {
                    for c in &summary.controllers {
                        println!(
                            "{:<11} violation {:.4}%  tardiness {:.3}  be_perf {:.3}  power_eff {:.3}",
                            c.controller.name(),
                            100.0 * c.median_violation_pct,
                            c.median_tardiness,
                            c.median_be_perf,
                            c.median_power_eff
                        );
                    }
                }
            }
            EXIT_OK
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("config error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("{stage} failed: {e}");
            EXIT_STAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_global_flags_after_the_subcommand() {
        let cli = Cli::try_parse_from(["prompt", "collect", "--seed", "4", "--out", "/tmp/x"]).unwrap();
        assert_eq!(cli.seed, Some(4));
        assert_eq!(cli.out, Some(PathBuf::from("/tmp/x")));
        assert_eq!(cli.command.stage(), Stage::Collect);
        assert!(Cli::try_parse_from(["prompt", "bogus"]).is_err());
    }

    #[test]
    fn missing_config_is_a_config_error() {
        let cli = Cli::try_parse_from(["prompt", "compare", "--config", "/no/such/exp.json"]).unwrap();
        assert_eq!(run(&cli), EXIT_CONFIG);
    }
}
