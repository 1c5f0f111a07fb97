//! Experiment configuration: one TOML document holding the scenario, both
//! trainers and run plumbing. Missing keys take their defaults; unknown keys
//! are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, Td3Params};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::learner::{DdpgConfig, NoiseSchedule};
use crate::power::{MaddpgConfig, UpdateSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Scheme run by the `baseline` command when none is given on the command line.
    pub baseline: Option<BaselineKind>,
    /// Episodes of the greedy testing stage.
    pub test_episodes: usize,
    pub env: EnvConfig,
    /// Stage one: RIS phase shifts.
    pub phase: DdpgConfig,
    /// Stage two: per-vehicle power allocation.
    pub power: MaddpgConfig,
    pub td3: Td3Params,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ExperimentConfig {
    /// Full-size setting: 8 vehicles, 36 elements, 1000 x 100 training.
    pub fn full() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            baseline: None,
            test_episodes: 10,
            env: EnvConfig::default(),
            phase: DdpgConfig::default(),
            power: MaddpgConfig::default(),
            td3: Td3Params::default(),
        }
    }

    /// Single-core profile: 4 vehicles, 16 elements, 300 x 50 training on the
    /// road stretch the RIS covers, at a load that needs offloading.
    pub fn desk() -> Self {
        let mut env = EnvConfig { elements: 16, arrival_rate: 4e6, ..EnvConfig::default() };
        env.layout.num_vehicles = 4;
        env.layout.road_start_x = 150.0;
        env.layout.road_end_x = 350.0;
        let noise = NoiseSchedule { initial: 0.3, decay: 0.99, floor: 0.01 };
        let base = DdpgConfig { episodes: 300, steps: 50, replay_capacity: 100_000, noise, ..DdpgConfig::default() };
        Self {
            output_dir: PathBuf::from("runs/desk"),
            test_episodes: 5,
            env,
            phase: DdpgConfig { actor_hidden: vec![128, 128], critic_hidden: vec![128, 128], discount: 0.5, ..base.clone() },
            power: MaddpgConfig {
                ddpg: DdpgConfig { actor_hidden: vec![64, 64], critic_hidden: vec![64, 64], ..base },
                policy_delay: 2,
                schedule: UpdateSchedule::Step,
            },
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.phase.validate()?;
        self.power.validate()?;
        if self.test_episodes == 0 {
            return Err(Error::Config("test_episodes must be positive".into()));
        }
        if self.td3.policy_delay == 0 || self.td3.smoothing_std < 0.0 || self.td3.smoothing_clip < 0.0 {
            return Err(Error::Config("td3 delay must be positive and smoothing non-negative".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// Overrides the episode count of both training stages.
    pub fn with_episodes(mut self, episodes: usize) -> Self {
        self.phase.episodes = episodes;
        self.power.ddpg.episodes = episodes;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate_and_round_trip() {
        for cfg in [ExperimentConfig::full(), ExperimentConfig::desk()] {
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn full_profile_values() {
        let c = ExperimentConfig::full();
        assert_eq!((c.env.num_vehicles(), c.env.elements, c.env.phase_bits), (8, 36, 3));
        assert_eq!(c.env.arrival_rate, 3e6);
        assert_eq!((c.env.fading.noise_power, c.env.fading.bandwidth), (1e-14, 1e6));
        assert_eq!((c.env.cycles_per_bit, c.env.capacitance, c.env.max_cpu_hz), (500.0, 1e-28, 2.15e9));
        assert_eq!((c.env.max_offload_power, c.env.rate_weight, c.env.power_weight, c.env.queue_weight), (1.0, 1.0, 1.0, 0.2));
        assert_eq!((c.phase.actor_lr, c.phase.critic_lr, c.phase.discount, c.phase.tau), (1e-4, 1e-3, 0.99, 0.005));
        assert_eq!((c.phase.batch_size, c.phase.episodes, c.phase.steps), (64, 1000, 100));
        assert_eq!(c.phase.actor_hidden, vec![512, 256]);
        assert_eq!(c.phase.critic_hidden, vec![1024, 512, 256]);
        assert_eq!(c.power.policy_delay, 2);
    }

    #[test]
    fn desk_profile_shape() {
        let c = ExperimentConfig::desk();
        assert_eq!((c.env.num_vehicles(), c.env.elements), (4, 16));
        assert_eq!((c.phase.episodes, c.phase.steps, c.power.ddpg.episodes, c.power.ddpg.steps), (300, 50, 300, 50));
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = ExperimentConfig::from_toml("seed = 7\n[env]\nelements = 8\n[env.layout]\nnum_vehicles = 2\n").unwrap();
        assert_eq!((c.seed, c.env.elements, c.env.num_vehicles()), (7, 8, 2));
        assert_eq!(c.phase, DdpgConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("sede = 1"), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml("[env]\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[phase]\ntau = 0.0").is_err());
        assert!(ExperimentConfig::from_toml("baseline = \"nope\"").is_err());
        let c = ExperimentConfig::from_toml("baseline = \"no-ris\"").unwrap();
        assert_eq!(c.baseline, Some(BaselineKind::NoRis));
    }

    #[test]
    fn shipped_files_match_profiles() {
        let full = ExperimentConfig::from_toml(include_str!("../../../configs/full.toml")).unwrap();
        let desk = ExperimentConfig::from_toml(include_str!("../../../configs/desk.toml")).unwrap();
        assert_eq!(full, ExperimentConfig::full());
        assert_eq!(desk, ExperimentConfig::desk());
    }

    #[test]
    fn episode_override() {
        let c = ExperimentConfig::desk().with_episodes(1);
        assert_eq!((c.phase.episodes, c.power.ddpg.episodes), (1, 1));
    }
}
