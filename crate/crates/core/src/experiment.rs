//! Command layer: the two training stages, the testing stage, baselines and
//! parameter sweeps, each reading and writing files under an output directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{run_baseline, BaselineKind, BaselineModel, BaselineSetup};
use crate::config::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::evaluation::{rollout, MetricsRow, PowerPolicy, RolloutSummary};
use crate::nn::{Checkpoint, Mlp};
use crate::phase::{train_phase, PhaseEpisode};
use crate::power::{train_power, Maddpg, PhaseSource, PowerEpisode};
use crate::rng::Domain;

/// Bumped whenever a CSV layout changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const PHASE_CHECKPOINT: &str = "phase.ckpt";
pub const PHASE_CSV: &str = "phase_episodes.csv";
pub const POWER_DIR: &str = "power";
pub const POWER_CSV: &str = "power_episodes.csv";
pub const GLOBAL_CRITICS_CHECKPOINT: &str = "power_global_critics.ckpt";
pub const TEST_CSV: &str = "test_metrics.csv";

pub fn power_actor_file(k: usize) -> String {
    format!("power_actor_{k}.ckpt")
}

pub fn power_local_critic_file(k: usize) -> String {
    format!("power_local_critic_{k}.ckpt")
}

pub const PHASE_HEADER: [&str; 4] = ["episode", "mean_ris_reward", "mean_rate_bps", "noise_std"];

pub fn power_header(k: usize) -> Vec<String> {
    let mut h = vec!["episode".to_string(), "scheme".into(), "r_global_mean".into()];
    for prefix in ["r_local_mean", "p_offload_mean", "p_local_mean"] {
        h.extend((0..k).map(|i| format!("{prefix}_{i}")));
    }
    h.push("queue_mean_bits".into());
    h
}

pub fn metrics_header(k: usize) -> Vec<String> {
    let mut h = vec!["episode".to_string(), "step".into(), "scheme".into()];
    for i in 0..k {
        for f in ["power_o", "power_l", "queue_bits", "snr_db", "r_local"] {
            h.push(format!("{f}_{i}"));
        }
    }
    h.push("r_global".into());
    h
}

pub const SWEEP_HEADER: [&str; 7] = [
    "variable",
    "value",
    "final_ris_reward",
    "mean_power_per_vu",
    "mean_queue_bits",
    "mean_r_global",
    "mean_spectral_efficiency",
];

/// Shortest round-trip decimal form; identical input gives identical text.
fn num(x: f64) -> String {
    x.to_string()
}

fn write_csv<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn owned(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

pub fn write_phase_csv(path: &Path, episodes: &[PhaseEpisode]) -> Result<()> {
    write_csv(
        path,
        &owned(&PHASE_HEADER),
        episodes.iter().map(|e| vec![e.episode.to_string(), num(e.mean_ris_reward), num(e.mean_rate_bps), num(e.noise_std)]),
    )
}

pub fn write_power_csv(path: &Path, scheme: &str, k: usize, episodes: &[PowerEpisode]) -> Result<()> {
    write_csv(
        path,
        &power_header(k),
        episodes.iter().map(|e| {
            let mut r = vec![e.episode.to_string(), scheme.to_string(), num(e.r_global_mean)];
            r.extend(e.r_local_mean.iter().map(|x| num(*x)));
            r.extend(e.p_offload_mean.iter().map(|x| num(*x)));
            r.extend(e.p_local_mean.iter().map(|x| num(*x)));
            r.push(num(e.queue_mean_bits));
            r
        }),
    )
}

pub fn write_metrics_csv(path: &Path, k: usize, rows: &[MetricsRow]) -> Result<()> {
    write_csv(
        path,
        &metrics_header(k),
        rows.iter().map(|m| {
            let mut r = vec![m.episode.to_string(), m.step.to_string(), m.scheme.clone()];
            for v in &m.vus {
                r.extend([num(v.power_o), num(v.power_l), num(v.queue_bits), num(v.snr_db), num(v.r_local)]);
            }
            r.push(num(m.r_global));
            r
        }),
    )
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

pub fn load_phase_actor(path: &Path) -> Result<Mlp> {
    Checkpoint::load(path)?.network("actor")
}

/// Loads one actor per vehicle from a power checkpoint directory.
pub fn load_power_actors(dir: &Path, k: usize) -> Result<Vec<Mlp>> {
    (0..k).map(|i| Checkpoint::load(&dir.join(power_actor_file(i)))?.network("actor")).collect()
}

#[derive(Debug, Clone)]
pub struct PhaseOutputs {
    pub checkpoint: PathBuf,
    pub csv: PathBuf,
    pub episodes: Vec<PhaseEpisode>,
}

/// Stage one: trains the phase agent, writes its checkpoint and episode log.
pub fn cmd_train_phase(cfg: &ExperimentConfig, out: &Path) -> Result<PhaseOutputs> {
    cfg.validate()?;
    prepare(out)?;
    let run = train_phase(&cfg.env, &cfg.phase, cfg.seed)?;
    let checkpoint = out.join(PHASE_CHECKPOINT);
    run.agent.checkpoint().save(&checkpoint)?;
    let csv = out.join(PHASE_CSV);
    write_phase_csv(&csv, &run.episodes)?;
    Ok(PhaseOutputs { checkpoint, csv, episodes: run.episodes })
}

#[derive(Debug, Clone)]
pub struct PowerOutputs {
    pub dir: PathBuf,
    pub csv: PathBuf,
    pub episodes: Vec<PowerEpisode>,
}

pub fn save_power_model(model: &Maddpg, dir: &Path) -> Result<()> {
    prepare(dir)?;
    for k in 0..model.num_agents() {
        model.actor_checkpoint(k).save(&dir.join(power_actor_file(k)))?;
        model.local_critic_checkpoint(k).save(&dir.join(power_local_critic_file(k)))?;
    }
    model.global_checkpoint().save(&dir.join(GLOBAL_CRITICS_CHECKPOINT))
}

/// Stage two: trains the power agents under the frozen phase policy.
pub fn cmd_train_power(cfg: &ExperimentConfig, phase_ckpt: &Path, out: &Path) -> Result<PowerOutputs> {
    cfg.validate()?;
    let actor = load_phase_actor(phase_ckpt)?;
    prepare(out)?;
    let run = train_power(&cfg.env, &PhaseSource::Trained(actor), &cfg.power, cfg.seed)?;
    let dir = out.join(POWER_DIR);
    save_power_model(&run.model, &dir)?;
    let csv = out.join(POWER_CSV);
    write_power_csv(&csv, "proposed", cfg.env.num_vehicles(), &run.episodes)?;
    Ok(PowerOutputs { dir, csv, episodes: run.episodes })
}

#[derive(Debug, Clone)]
pub struct TestOutputs {
    pub csv: PathBuf,
    pub rows: usize,
    pub summary: RolloutSummary,
}

/// Testing stage: greedy rollout of the frozen phase and power policies.
/// Reads checkpoints only; nothing is trained or written back.
pub fn cmd_test(cfg: &ExperimentConfig, phase_ckpt: &Path, power_dir: &Path, out: &Path) -> Result<TestOutputs> {
    cfg.validate()?;
    let phase = load_phase_actor(phase_ckpt)?;
    let actors = load_power_actors(power_dir, cfg.env.num_vehicles())?;
    prepare(out)?;
    let run = rollout(
        &cfg.env,
        &PhaseSource::Trained(phase),
        &PowerPolicy::Decentralized(actors),
        cfg.seed,
        Domain::Eval,
        cfg.test_episodes,
        cfg.power.ddpg.steps,
        "proposed",
    )?;
    let csv = out.join(TEST_CSV);
    write_metrics_csv(&csv, cfg.env.num_vehicles(), &run.rows)?;
    Ok(TestOutputs { csv, rows: run.rows.len(), summary: run.summary })
}

#[derive(Debug, Clone)]
pub struct BaselineOutputs {
    pub episodes_csv: Option<PathBuf>,
    pub test_csv: PathBuf,
    pub summary: RolloutSummary,
}

/// Runs one comparison scheme: trains it if it learns, then tests it greedily.
pub fn cmd_baseline(
    cfg: &ExperimentConfig,
    kind: BaselineKind,
    phase_ckpt: Option<&Path>,
    out: &Path,
) -> Result<BaselineOutputs> {
    cfg.validate()?;
    let phase_actor = match phase_ckpt {
        Some(p) if kind.needs_phase_policy() => Some(load_phase_actor(p)?),
        _ => None,
    };
    if kind.needs_phase_policy() && phase_actor.is_none() {
        return Err(Error::Config(format!("baseline {kind} needs --phase-ckpt")));
    }
    prepare(out)?;
    let setup = BaselineSetup {
        env: &cfg.env,
        power: &cfg.power,
        td3: cfg.td3,
        phase_actor: phase_actor.as_ref(),
        seed: cfg.seed,
        test_episodes: cfg.test_episodes,
    };
    let run = run_baseline(kind, &setup)?;
    let k = cfg.env.num_vehicles();
    match &run.model {
        BaselineModel::Centralized(agent) => agent.checkpoint().save(&out.join(format!("baseline_{kind}.ckpt")))?,
        BaselineModel::MultiAgent(model) => save_power_model(model, &out.join(format!("baseline_{kind}")))?,
        BaselineModel::Heuristic => {}
    }
    let episodes_csv = if run.episodes.is_empty() {
        None
    } else {
        let p = out.join(format!("baseline_{kind}_episodes.csv"));
        write_power_csv(&p, kind.name(), k, &run.episodes)?;
        Some(p)
    };
    let test_csv = out.join(format!("baseline_{kind}_test.csv"));
    write_metrics_csv(&test_csv, k, &run.test.rows)?;
    Ok(BaselineOutputs { episodes_csv, test_csv, summary: run.test.summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Task arrival rate, given in Mbit/s.
    Eta,
    /// RIS elements.
    N,
    /// Vehicles.
    K,
    Seed,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Eta => "eta",
            SweepVariable::N => "N",
            SweepVariable::K => "K",
            SweepVariable::Seed => "seed",
        }
    }

    /// Copy of `cfg` with this variable set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = cfg.clone();
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(invalid(format!("{} needs a non-negative integer, got {value}", self.name())))
            }
        };
        match self {
            SweepVariable::Eta => c.env.arrival_rate = value * 1e6,
            SweepVariable::N => c.env.elements = count()?,
            SweepVariable::K => c.env.layout.num_vehicles = count()?,
            SweepVariable::Seed => c.seed = count()? as u64,
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(SweepVariable::Eta),
            "N" | "n" => Ok(SweepVariable::N),
            "K" | "k" => Ok(SweepVariable::K),
            "seed" => Ok(SweepVariable::Seed),
            _ => Err(invalid(format!("unsupported sweep variable `{s}` (expected eta, N, K or seed)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub final_ris_reward: f64,
    pub summary: RolloutSummary,
}

/// Train-and-test at every value; one aggregated row per value, ascending.
pub fn cmd_sweep(cfg: &ExperimentConfig, variable: SweepVariable, values: &[f64], out: &Path) -> Result<(PathBuf, Vec<SweepPoint>)> {
    if values.is_empty() {
        return Err(invalid("sweep needs at least one value"));
    }
    let mut values = values.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    prepare(out)?;
    let mut points = Vec::with_capacity(values.len());
    for value in values {
        let c = variable.apply(cfg, value)?;
        let dir = out.join(format!("{variable}_{}", num(value)));
        let phase = cmd_train_phase(&c, &dir)?;
        let power = cmd_train_power(&c, &phase.checkpoint, &dir)?;
        let test = cmd_test(&c, &phase.checkpoint, &power.dir, &dir)?;
        let final_ris_reward = phase.episodes.last().map_or(f64::NAN, |e| e.mean_ris_reward);
        points.push(SweepPoint { value, final_ris_reward, summary: test.summary });
    }
    let path = out.join(format!("sweep_{variable}.csv"));
    write_csv(
        &path,
        &owned(&SWEEP_HEADER),
        points.iter().map(|p| {
            vec![
                variable.to_string(),
                num(p.value),
                num(p.final_ris_reward),
                num(p.summary.mean_power_per_vu),
                num(p.summary.mean_queue_bits),
                num(p.summary.mean_r_global),
                num(p.summary.mean_spectral_efficiency),
            ]
        }),
    )?;
    Ok((path, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::desk();
        c.env.elements = 4;
        c.env.phase_bits = 2;
        c.env.layout.num_vehicles = 2;
        for d in [&mut c.phase, &mut c.power.ddpg] {
            d.actor_hidden = vec![8];
            d.critic_hidden = vec![8];
            d.batch_size = 8;
            d.episodes = 2;
            d.steps = 10;
            d.replay_capacity = 1000;
        }
        c.test_episodes = 2;
        c
    }

    fn lines(p: &Path) -> Vec<String> {
        fs::read_to_string(p).unwrap().lines().map(str::to_string).collect()
    }

    #[test]
    fn headers_have_declared_widths() {
        assert_eq!(power_header(3).len(), 3 + 9 + 1);
        assert_eq!(metrics_header(2).len(), 3 + 10 + 1);
        assert_eq!(CSV_SCHEMA_VERSION, 1);
    }

    #[test]
    fn full_pipeline_writes_consistent_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let phase = cmd_train_phase(&cfg, dir.path()).unwrap();
        assert_eq!(lines(&phase.csv).len(), 3);
        let power = cmd_train_power(&cfg, &phase.checkpoint, dir.path()).unwrap();
        let rows = lines(&power.csv);
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.split(',').count() == power_header(2).len()));
        for f in [power_actor_file(1), power_local_critic_file(0), GLOBAL_CRITICS_CHECKPOINT.to_string()] {
            assert!(power.dir.join(f).exists());
        }
        let test = cmd_test(&cfg, &phase.checkpoint, &power.dir, dir.path()).unwrap();
        assert_eq!(test.rows, 2 * 10);
        let rows = lines(&test.csv);
        assert_eq!(rows.len(), 21);
        assert!(rows.iter().all(|r| r.split(',').count() == metrics_header(2).len()));
    }

    #[test]
    fn missing_checkpoints_are_reported_by_path() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.ckpt");
        match cmd_train_power(&tiny(), &missing, dir.path()) {
            Err(Error::MissingCheckpoint(p)) => assert_eq!(p, missing),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(cmd_baseline(&tiny(), BaselineKind::MaxPower, None, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn baselines_share_the_schema() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let phase = cmd_train_phase(&cfg, dir.path()).unwrap();
        for kind in BaselineKind::ALL {
            let o = cmd_baseline(&cfg, kind, Some(&phase.checkpoint), dir.path()).unwrap();
            assert_eq!(lines(&o.test_csv)[0], metrics_header(2).join(","));
            if let Some(p) = o.episodes_csv {
                assert_eq!(lines(&p)[0], power_header(2).join(","));
            }
        }
    }

    #[test]
    fn sweep_variables() {
        assert_eq!("eta".parse::<SweepVariable>().unwrap(), SweepVariable::Eta);
        assert!("gamma".parse::<SweepVariable>().is_err());
        let c = SweepVariable::Eta.apply(&tiny(), 2.0).unwrap();
        assert_eq!(c.env.arrival_rate, 2e6);
        assert!(SweepVariable::N.apply(&tiny(), 2.5).is_err());
        assert_eq!(SweepVariable::K.apply(&tiny(), 3.0).unwrap().env.num_vehicles(), 3);
    }

    #[test]
    fn sweep_output_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let (path, points) = cmd_sweep(&tiny(), SweepVariable::Seed, &[2.0, 0.0, 1.0], dir.path()).unwrap();
        assert_eq!(points.iter().map(|p| p.value).collect::<Vec<_>>(), vec![0.0, 1.0, 2.0]);
        let rows = lines(&path);
        assert_eq!(rows.len(), 4);
        assert!(rows[1].starts_with("seed,0,") && rows[3].starts_with("seed,2,"));
    }
}
