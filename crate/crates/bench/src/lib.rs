//! Fixtures shared by the criterion benches.

use risvec_core::channel::sample_small_scale;
use risvec_core::{ChannelModel, ChannelSet, Domain, EnvConfig, Result, VecEnv};

/// Small scenario for exhaustive-search timing: `n` elements, `k` vehicles.
pub fn small_env(n: usize, bits: u32, k: usize) -> EnvConfig {
    let mut cfg = EnvConfig { elements: n, phase_bits: bits, ..EnvConfig::default() };
    cfg.layout.num_vehicles = k;
    cfg
}

/// One slot's channels for every vehicle of a fresh evaluation episode.
pub fn slot_channels<R: rand::Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Result<Vec<ChannelSet>> {
    let model = ChannelModel::new(cfg.fading.clone(), &cfg.layout, cfg.elements)?;
    let env = VecEnv::new(cfg.clone(), 0, Domain::Eval)?;
    env.vehicles().iter().map(|v| model.channels(&v.position, sample_small_scale(rng))).collect()
}
