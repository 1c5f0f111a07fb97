use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use risvec_core::experiment::{cmd_baseline, cmd_sweep, cmd_test, cmd_train_phase, cmd_train_power, PHASE_CHECKPOINT, POWER_DIR};
use risvec_core::{BaselineKind, Error, ExperimentConfig, SweepVariable};

/// RIS-assisted vehicular edge computing: phase-shift and power-allocation training.
#[derive(Debug, Parser)]
#[command(name = "risvec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config; omitted keys keep their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Use the built-in desk profile instead of the full-size defaults.
    #[arg(long, conflicts_with = "config")]
    desk: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the config's `output_dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Episodes for every training stage.
    #[arg(long)]
    episodes: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None if self.desk => ExperimentConfig::desk(),
            None => ExperimentConfig::full(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.episodes {
            cfg = cfg.with_episodes(e);
        }
        cfg.validate()?;
        let out = self.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok((cfg, out))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stage one: learn RIS phase shifts with offload power pinned at maximum.
    TrainPhase {
        #[command(flatten)]
        common: Common,
    },
    /// Stage two: learn per-vehicle power allocation under a frozen phase policy.
    TrainPower {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/phase.ckpt`.
        #[arg(long, value_name = "PATH")]
        phase_ckpt: Option<PathBuf>,
    },
    /// Testing stage: greedy rollout of trained policies, logging every slot.
    Test {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        phase_ckpt: Option<PathBuf>,
        /// Directory with power_actor_<k>.ckpt files; defaults to `<out>/power`.
        #[arg(long, value_name = "DIR")]
        power_dir: Option<PathBuf>,
    },
    /// Train (if needed) and test a comparison scheme.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// centralized-ddpg, centralized-td3, random-phase, no-ris, max-power or random-power.
        #[arg(long)]
        baseline: Option<BaselineKind>,
        #[arg(long, value_name = "PATH")]
        phase_ckpt: Option<PathBuf>,
    },
    /// Train and test at several values of one variable; eta is in Mbit/s.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// eta, N, K or seed.
        #[arg(long)]
        variable: SweepVariable,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
    },
}

fn default_path(given: &Option<PathBuf>, out: &Path, name: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| out.join(name))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainPhase { common } => {
            let (cfg, out) = common.load()?;
            let o = cmd_train_phase(&cfg, &out)?;
            println!("wrote {} and {} ({} episodes)", o.checkpoint.display(), o.csv.display(), o.episodes.len());
        }
        Command::TrainPower { common, phase_ckpt } => {
            let (cfg, out) = common.load()?;
            let phase = default_path(&phase_ckpt, &out, PHASE_CHECKPOINT);
            let o = cmd_train_power(&cfg, &phase, &out)?;
            println!("wrote {} and {} ({} episodes)", o.dir.display(), o.csv.display(), o.episodes.len());
        }
        Command::Test { common, phase_ckpt, power_dir } => {
            let (cfg, out) = common.load()?;
            let phase = default_path(&phase_ckpt, &out, PHASE_CHECKPOINT);
            let power = default_path(&power_dir, &out, POWER_DIR);
            let o = cmd_test(&cfg, &phase, &power, &out)?;
            println!(
                "wrote {} ({} rows): mean power per VU {:.4} W, mean queue {:.0} bits, mean reward {:.4}",
                o.csv.display(),
                o.rows,
                o.summary.mean_power_per_vu,
                o.summary.mean_queue_bits,
                o.summary.mean_r_global
            );
        }
        Command::Baseline { common, baseline, phase_ckpt } => {
            let (cfg, out) = common.load()?;
            let kind = baseline
                .or(cfg.baseline)
                .context("no baseline given: pass --baseline or set `baseline` in the config")?;
            let phase = kind.needs_phase_policy().then(|| default_path(&phase_ckpt, &out, PHASE_CHECKPOINT));
            let o = cmd_baseline(&cfg, kind, phase.as_deref(), &out)?;
            println!(
                "{kind}: wrote {}; mean power per VU {:.4} W, mean queue {:.0} bits",
                o.test_csv.display(),
                o.summary.mean_power_per_vu,
                o.summary.mean_queue_bits
            );
        }
        Command::Sweep { common, variable, values } => {
            let (cfg, out) = common.load()?;
            let (path, points) = cmd_sweep(&cfg, variable, &values, &out)?;
            println!("wrote {} ({} points)", path.display(), points.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::MissingCheckpoint(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
