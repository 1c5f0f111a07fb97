//! Slot-stepped vehicular edge computing environment.
//!
//! Each slot draws fresh small-scale fading, evaluates every vehicle's SNR
//! through the configured RIS, serves its buffer by offloading and local
//! DVFS computation, admits Poisson arrivals and moves the vehicles.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::channel::{rate_bits, sample_small_scale, snr, ChannelModel, ChannelSet, FadingParams, PhaseConfig};
use crate::error::{ensure_len, invalid, Result};
use crate::geometry::{advance_vehicles, ScenarioLayout, VehicleState};
use crate::rng::{stream_rng, Domain, SimRng, Stream};

/// Length of a single vehicle's observation.
pub const VU_STATE_DIM: usize = 5;
/// Length of a single vehicle's action `[p_o, p_l]`.
pub const VU_ACTION_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Number of RIS elements.
    pub elements: usize,
    /// Phase resolution in bits.
    pub phase_bits: u32,
    /// Slot length in seconds.
    pub slot_seconds: f64,
    /// Mean task arrival rate in bits per second.
    pub arrival_rate: f64,
    /// Arrivals come in whole packets of this many bits.
    pub packet_bits: f64,
    pub cycles_per_bit: f64,
    pub capacitance: f64,
    pub max_cpu_hz: f64,
    pub max_offload_power: f64,
    pub max_local_power: f64,
    /// Weight of the mean spectral efficiency in the RIS reward.
    pub rate_weight: f64,
    /// Weight of the power term in the vehicle reward.
    pub power_weight: f64,
    /// Weight of the buffer term in the vehicle reward.
    pub queue_weight: f64,
    /// Bits per unit of buffer in the reward and in observations.
    pub bits_unit: f64,
    /// Upper clip for `log2(1 + snr)` in observations.
    pub snr_state_clip: f64,
    pub fading: FadingParams,
    pub layout: ScenarioLayout,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            elements: 36,
            phase_bits: 3,
            slot_seconds: 0.1,
            arrival_rate: 3e6,
            packet_bits: 1000.0,
            cycles_per_bit: 500.0,
            capacitance: 1e-28,
            max_cpu_hz: 2.15e9,
            max_offload_power: 1.0,
            max_local_power: 1.0,
            rate_weight: 1.0,
            power_weight: 1.0,
            queue_weight: 0.2,
            bits_unit: 1e5,
            snr_state_clip: 20.0,
            fading: FadingParams::default(),
            layout: ScenarioLayout::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.fading.validate()?;
        if self.elements == 0 || self.phase_bits == 0 || self.phase_bits > 16 {
            return Err(invalid("need at least one RIS element and 1..=16 phase bits"));
        }
        let positive = [
            self.slot_seconds,
            self.arrival_rate,
            self.packet_bits,
            self.cycles_per_bit,
            self.capacitance,
            self.max_cpu_hz,
            self.max_offload_power,
            self.max_local_power,
            self.bits_unit,
            self.snr_state_clip,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("environment rates, powers and units must be positive"));
        }
        if !(self.power_weight >= 0.0 && self.queue_weight >= 0.0 && self.rate_weight > 0.0) {
            return Err(invalid("reward weights must be non-negative (rate weight positive)"));
        }
        Ok(())
    }

    pub fn num_vehicles(&self) -> usize {
        self.layout.num_vehicles
    }

    /// RIS agent observation length: phases, planar positions, previous SNRs.
    pub fn ris_state_dim(&self) -> usize {
        self.elements + 3 * self.num_vehicles()
    }

    /// Mean arrival per vehicle per slot, in bits.
    pub fn arrival_per_slot(&self) -> f64 {
        self.arrival_rate * self.slot_seconds
    }
}

/// Per-vehicle buffer contents in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueState {
    pub bits: Vec<f64>,
}

/// Transmit powers chosen by one vehicle for one slot, in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAction {
    pub offload: f64,
    pub local: f64,
}

impl PowerAction {
    pub fn new(offload: f64, local: f64) -> Self {
        Self { offload, local }
    }

    pub fn total(&self) -> f64 {
        self.offload + self.local
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub actions: Vec<PowerAction>,
    pub arrivals: Vec<f64>,
    /// Bits the uplink could carry this slot.
    pub capacity_offload: Vec<f64>,
    /// Bits the local CPU could process this slot.
    pub capacity_local: Vec<f64>,
    /// Bits actually removed by offloading (never more than the buffer held).
    pub served_offload: Vec<f64>,
    /// Bits actually removed locally, after offloading took its share.
    pub served_local: Vec<f64>,
    pub snr: Vec<f64>,
    /// `log2(1 + snr)` per vehicle.
    pub spectral_efficiency: Vec<f64>,
    pub r_local: Vec<f64>,
    pub r_global: f64,
    pub ris_reward: f64,
    pub queue_before: QueueState,
    pub queue: QueueState,
    pub channels: Vec<ChannelSet>,
}

/// Poisson arrivals in whole packets, with mean `rate * dt` bits.
pub fn sample_arrivals<R: Rng + ?Sized>(rate: f64, dt: f64, packet_bits: f64, rng: &mut R) -> f64 {
    let mean_packets = rate * dt / packet_bits;
    if !(mean_packets > 0.0) {
        return 0.0;
    }
    let poisson = Poisson::new(mean_packets).expect("positive Poisson mean");
    let packets: f64 = poisson.sample(rng);
    packets * packet_bits
}

/// Bits processed locally in one slot at local power `p_local` under DVFS.
pub fn local_capacity_bits(p_local: f64, cfg: &EnvConfig) -> Result<f64> {
    if !(p_local >= 0.0) {
        return Err(invalid(format!("local power must be non-negative, got {p_local}")));
    }
    let freq = (p_local / cfg.capacitance).cbrt().min(cfg.max_cpu_hz);
    Ok(cfg.slot_seconds * freq / cfg.cycles_per_bit)
}

/// `max(0, q - served_offload - served_local) + arrivals`.
pub fn update_queue(q: f64, served_offload: f64, served_local: f64, arrivals: f64) -> f64 {
    (q - served_offload - served_local).max(0.0) + arrivals
}

/// Negative weighted sum of power and buffer (buffer in reward units).
pub fn local_reward(p_offload: f64, p_local: f64, queue_units: f64, w_power: f64, w_queue: f64) -> f64 {
    -(w_power * (p_offload + p_local) + w_queue * queue_units)
}

pub fn global_reward(r_locals: &[f64]) -> Result<f64> {
    if r_locals.is_empty() {
        return Err(invalid("global reward needs at least one local reward"));
    }
    Ok(r_locals.iter().sum::<f64>() / r_locals.len() as f64)
}

/// Weighted mean spectral efficiency across vehicles.
pub fn ris_reward(spectral_efficiency: &[f64], weight: f64) -> Result<f64> {
    if spectral_efficiency.is_empty() {
        return Err(invalid("RIS reward needs at least one vehicle"));
    }
    Ok(weight * spectral_efficiency.iter().sum::<f64>() / spectral_efficiency.len() as f64)
}

fn snr_feature(gamma: f64, clip: f64) -> f64 {
    (1.0 + gamma.max(0.0)).log2().clamp(0.0, clip)
}

/// RIS agent observation: phases (radians), normalized planar positions and
/// previous-slot SNRs fed as clipped `log2(1 + snr)`.
pub fn build_ris_state(
    phases: &PhaseConfig,
    vehicles: &[VehicleState],
    prev_snr: &[f64],
    cfg: &EnvConfig,
) -> Result<Vec<f64>> {
    ensure_len(cfg.elements, phases.len())?;
    ensure_len(cfg.num_vehicles(), vehicles.len())?;
    ensure_len(cfg.num_vehicles(), prev_snr.len())?;
    let scale = cfg.layout.road_length();
    let mut s = Vec::with_capacity(cfg.ris_state_dim());
    s.extend(phases.phases());
    for v in vehicles {
        s.push(v.position.x / scale);
        s.push(v.position.y / scale);
    }
    s.extend(prev_snr.iter().map(|g| snr_feature(*g, cfg.snr_state_clip)));
    Ok(s)
}

/// Vehicle observation `[q, q_o, q_l, q_o + q_l - q, snr]` with bit
/// quantities in `bits_unit` and the SNR as clipped `log2(1 + snr)`.
pub fn build_vu_state(
    queue: f64,
    served_offload: f64,
    served_local: f64,
    prev_snr: f64,
    cfg: &EnvConfig,
) -> [f64; VU_STATE_DIM] {
    let u = cfg.bits_unit;
    let (q, o, l) = (queue / u, served_offload / u, served_local / u);
    [q, o, l, o + l - q, snr_feature(prev_snr, cfg.snr_state_clip)]
}

/// The environment proper. Owns its arrival, fading and mobility streams.
#[derive(Debug, Clone)]
pub struct VecEnv {
    cfg: EnvConfig,
    model: ChannelModel,
    vehicles: Vec<VehicleState>,
    initial_vehicles: Vec<VehicleState>,
    queue: Vec<f64>,
    prev_snr: Vec<f64>,
    last_capacity_offload: Vec<f64>,
    last_capacity_local: Vec<f64>,
    phases: PhaseConfig,
    arrivals_rng: SimRng,
    fading_rng: SimRng,
    mobility_rng: SimRng,
    slot: u64,
}

impl VecEnv {
    pub fn new(cfg: EnvConfig, seed: u64, domain: Domain) -> Result<Self> {
        cfg.validate()?;
        let model = ChannelModel::new(cfg.fading.clone(), &cfg.layout, cfg.elements)?;
        let mut mobility_rng = stream_rng(seed, domain, Stream::Mobility);
        // A static scenario is one fixed placement per seed, shared by training and evaluation.
        let vehicles = if cfg.layout.static_vehicles {
            cfg.layout.spawn_vehicles(&mut stream_rng(seed, Domain::Train, Stream::Mobility))
        } else {
            cfg.layout.spawn_vehicles(&mut mobility_rng)
        };
        let k = cfg.num_vehicles();
        let phases = PhaseConfig::zeros(cfg.elements, cfg.phase_bits)?;
        Ok(Self {
            model,
            initial_vehicles: vehicles.clone(),
            vehicles,
            queue: vec![0.0; k],
            prev_snr: vec![0.0; k],
            last_capacity_offload: vec![0.0; k],
            last_capacity_local: vec![0.0; k],
            phases,
            arrivals_rng: stream_rng(seed, domain, Stream::Arrivals),
            fading_rng: stream_rng(seed, domain, Stream::Fading),
            mobility_rng,
            slot: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn channel_model(&self) -> &ChannelModel {
        &self.model
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn queue(&self) -> QueueState {
        QueueState { bits: self.queue.clone() }
    }

    pub fn prev_snr(&self) -> &[f64] {
        &self.prev_snr
    }

    pub fn phases(&self) -> &PhaseConfig {
        &self.phases
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Starts a new episode: empty buffers, zero SNR history, fresh vehicle
    /// placement (static scenarios keep their original placement).
    pub fn reset(&mut self) {
        self.vehicles = if self.cfg.layout.static_vehicles {
            self.initial_vehicles.clone()
        } else {
            self.cfg.layout.spawn_vehicles(&mut self.mobility_rng)
        };
        self.queue.iter_mut().for_each(|q| *q = 0.0);
        self.prev_snr.iter_mut().for_each(|g| *g = 0.0);
        self.last_capacity_offload.iter_mut().for_each(|c| *c = 0.0);
        self.last_capacity_local.iter_mut().for_each(|c| *c = 0.0);
        self.phases = PhaseConfig::zeros(self.cfg.elements, self.cfg.phase_bits)
            .expect("validated phase resolution");
    }

    pub fn ris_state(&self) -> Vec<f64> {
        build_ris_state(&self.phases, &self.vehicles, &self.prev_snr, &self.cfg)
            .expect("environment keeps consistent dimensions")
    }

    pub fn vu_state(&self, k: usize) -> [f64; VU_STATE_DIM] {
        build_vu_state(
            self.queue[k],
            self.last_capacity_offload[k],
            self.last_capacity_local[k],
            self.prev_snr[k],
            &self.cfg,
        )
    }

    /// Agent observations concatenated in agent order.
    pub fn joint_vu_state(&self) -> Vec<f64> {
        (0..self.cfg.num_vehicles()).flat_map(|k| self.vu_state(k)).collect()
    }

    fn validate_actions(&self, actions: &[PowerAction]) -> Result<()> {
        ensure_len(self.cfg.num_vehicles(), actions.len())?;
        for (k, a) in actions.iter().enumerate() {
            let ok_o = (0.0..=self.cfg.max_offload_power).contains(&a.offload);
            let ok_l = (0.0..=self.cfg.max_local_power).contains(&a.local);
            if !(ok_o && ok_l) {
                return Err(invalid(format!("vehicle {k}: power {a:?} outside budget")));
            }
        }
        Ok(())
    }

    /// Runs one slot. `phases = None` removes the RIS path (direct link only).
    pub fn step(&mut self, phases: Option<&PhaseConfig>, actions: &[PowerAction]) -> Result<StepOutcome> {
        self.validate_actions(actions)?;
        if let Some(p) = phases {
            ensure_len(self.cfg.elements, p.len())?;
        }
        let k_count = self.cfg.num_vehicles();
        let cfg = &self.cfg;
        let mut out = StepOutcome {
            actions: actions.to_vec(),
            arrivals: Vec::with_capacity(k_count),
            capacity_offload: Vec::with_capacity(k_count),
            capacity_local: Vec::with_capacity(k_count),
            served_offload: Vec::with_capacity(k_count),
            served_local: Vec::with_capacity(k_count),
            snr: Vec::with_capacity(k_count),
            spectral_efficiency: Vec::with_capacity(k_count),
            r_local: Vec::with_capacity(k_count),
            r_global: 0.0,
            ris_reward: 0.0,
            queue_before: self.queue(),
            queue: QueueState { bits: Vec::with_capacity(k_count) },
            channels: Vec::with_capacity(k_count),
        };
        for (k, action) in actions.iter().enumerate() {
            let g = sample_small_scale(&mut self.fading_rng);
            let cs = self.model.channels(&self.vehicles[k].position, g)?;
            let gamma = snr(action.offload, &cs, phases, cfg.fading.noise_power)?;
            let cap_o = rate_bits(gamma, cfg.fading.bandwidth, cfg.slot_seconds);
            let cap_l = local_capacity_bits(action.local, cfg)?;
            let q = self.queue[k];
            let served_o = cap_o.min(q);
            let served_l = cap_l.min(q - served_o);
            let arrivals = sample_arrivals(cfg.arrival_rate, cfg.slot_seconds, cfg.packet_bits, &mut self.arrivals_rng);
            let next_q = update_queue(q, cap_o, cap_l, arrivals);
            let r = local_reward(
                action.offload,
                action.local,
                next_q / cfg.bits_unit,
                cfg.power_weight,
                cfg.queue_weight,
            );
            out.arrivals.push(arrivals);
            out.capacity_offload.push(cap_o);
            out.capacity_local.push(cap_l);
            out.served_offload.push(served_o);
            out.served_local.push(served_l);
            out.snr.push(gamma);
            out.spectral_efficiency.push((1.0 + gamma).log2());
            out.r_local.push(r);
            out.queue.bits.push(next_q);
            out.channels.push(cs);
        }
        out.r_global = global_reward(&out.r_local)?;
        out.ris_reward = ris_reward(&out.spectral_efficiency, cfg.rate_weight)?;

        self.queue.clone_from(&out.queue.bits);
        self.prev_snr.clone_from(&out.snr);
        self.last_capacity_offload.clone_from(&out.capacity_offload);
        self.last_capacity_local.clone_from(&out.capacity_local);
        if let Some(p) = phases {
            self.phases = p.clone();
        }
        if !self.cfg.layout.static_vehicles {
            self.vehicles = advance_vehicles(&self.vehicles, cfg.slot_seconds, &cfg.layout, &mut self.mobility_rng)?;
        }
        self.slot += 1;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn small_cfg() -> EnvConfig {
        let mut cfg = EnvConfig { elements: 4, ..EnvConfig::default() };
        cfg.layout.num_vehicles = 3;
        cfg
    }

    #[test]
    fn arrivals_are_whole_packets_with_the_right_mean() {
        let mut rng = stream_rng(5, Domain::Train, Stream::Arrivals);
        assert_eq!(sample_arrivals(0.0, 0.1, 1000.0, &mut rng), 0.0);
        let draws = 100_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let a = sample_arrivals(3e6, 0.1, 1000.0, &mut rng);
            assert!(a >= 0.0 && (a / 1000.0).fract() == 0.0);
            total += a;
        }
        let mean = total / draws as f64;
        assert!((mean / 3e5 - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn local_capacity_follows_dvfs() {
        let cfg = EnvConfig::default();
        assert_eq!(local_capacity_bits(0.0, &cfg).unwrap(), 0.0);
        let uncapped = EnvConfig { max_cpu_hz: 1e12, ..cfg.clone() };
        let full = local_capacity_bits(1.0, &uncapped).unwrap();
        assert!((full - 430_886.938).abs() < 1.0, "{full}");
        let eighth = local_capacity_bits(0.125, &uncapped).unwrap();
        assert!((eighth / full - 0.5).abs() < 1e-12);
        // The CPU frequency cap bites just below the 1 W cube-root frequency.
        let capped = local_capacity_bits(1.0, &cfg).unwrap();
        assert!((capped - 0.1 * 2.15e9 / 500.0).abs() < 1e-6);
        assert!(local_capacity_bits(-0.1, &cfg).is_err());
    }

    #[test]
    fn queue_update_examples() {
        assert_eq!(update_queue(1000.0, 1000.0, 500.0, 200.0), 200.0);
        assert_eq!(update_queue(1000.0, 300.0, 100.0, 0.0), 600.0);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(local_reward(0.0, 0.0, 0.0, 1.0, 0.2), 0.0);
        assert_eq!(local_reward(0.5, 0.5, 0.0, 1.0, 0.2), -1.0);
        assert!((local_reward(0.5, 0.5, 5.0, 1.0, 0.2) + 2.0).abs() < 1e-12);
        assert_eq!(global_reward(&[-1.0, -3.0]).unwrap(), -2.0);
        assert_eq!(global_reward(&[-0.7; 4]).unwrap(), -0.7);
        assert!(global_reward(&[]).is_err());
        assert_eq!(ris_reward(&[0.0, 0.0], 1.0).unwrap(), 0.0);
        assert_eq!(ris_reward(&[2.0], 1.0).unwrap(), 2.0);
        assert_eq!(ris_reward(&[1.0, 2.0], 1.0).unwrap(), 1.5);
    }

    #[test]
    fn global_reward_matches_independent_sum() {
        let mut rng = stream_rng(3, Domain::Train, Stream::Init);
        let v: Vec<f64> = (0..8).map(|_| -rng.random_range(0.0..5.0)).collect();
        let mut acc = 0.0;
        for x in &v {
            acc += x;
        }
        assert!((global_reward(&v).unwrap() - acc / 8.0).abs() < 1e-12);
    }

    #[test]
    fn ris_state_layout() {
        let mut cfg = small_cfg();
        cfg.elements = 2;
        cfg.layout.num_vehicles = 1;
        let env = VecEnv::new(cfg.clone(), 0, Domain::Train).unwrap();
        let phases = PhaseConfig::lossless(vec![1, 2], 2).unwrap();
        let s = build_ris_state(&phases, env.vehicles(), &[0.0], &cfg).unwrap();
        assert_eq!(s.len(), 5);
        assert!((s[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((s[1] - std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(s[2], env.vehicles()[0].position.x / 500.0);
        assert_eq!(s[3], 200.0 / 500.0);
        assert_eq!(s[4], 0.0);
        assert_eq!(env.ris_state()[4], 0.0);
        assert!(build_ris_state(&phases, env.vehicles(), &[0.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn vu_state_layout() {
        let cfg = EnvConfig::default();
        assert_eq!(build_vu_state(0.0, 0.0, 0.0, 0.0, &cfg), [0.0; 5]);
        let s = build_vu_state(100.0 * cfg.bits_unit, 100.0 * cfg.bits_unit, 50.0 * cfg.bits_unit, 3.0, &cfg);
        assert_eq!(s[3], 50.0);
        assert_eq!(s[3], s[1] + s[2] - s[0]);
        assert_eq!(s[4], 2.0);
    }

    #[test]
    fn zero_power_only_accumulates_arrivals() {
        let mut env = VecEnv::new(small_cfg(), 9, Domain::Train).unwrap();
        let phases = PhaseConfig::zeros(4, 3).unwrap();
        let idle = vec![PowerAction::new(0.0, 0.0); 3];
        let mut expected = vec![0.0; 3];
        for _ in 0..20 {
            let out = env.step(Some(&phases), &idle).unwrap();
            for k in 0..3 {
                assert_eq!(out.served_offload[k], 0.0);
                assert_eq!(out.served_local[k], 0.0);
                expected[k] += out.arrivals[k];
                assert_eq!(out.queue.bits[k], expected[k]);
            }
        }
    }

    #[test]
    fn saturated_queue_serves_full_capacity() {
        let mut env = VecEnv::new(small_cfg(), 4, Domain::Train).unwrap();
        let phases = PhaseConfig::lossless(vec![1, 3, 0, 2], 3).unwrap();
        env.queue = vec![1e12; 3];
        let full = vec![PowerAction::new(1.0, 1.0); 3];
        let out = env.step(Some(&phases), &full).unwrap();
        let cfg = env.config().clone();
        for k in 0..3 {
            let gamma = snr(1.0, &out.channels[k], Some(&phases), cfg.fading.noise_power).unwrap();
            assert_eq!(out.served_offload[k], rate_bits(gamma, cfg.fading.bandwidth, cfg.slot_seconds));
            assert_eq!(out.served_local[k], local_capacity_bits(1.0, &cfg).unwrap());
        }
        assert!((out.r_global - global_reward(&out.r_local).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn invalid_powers_rejected() {
        let mut env = VecEnv::new(small_cfg(), 0, Domain::Train).unwrap();
        let bad = vec![PowerAction::new(1.5, 0.0); 3];
        assert!(env.step(None, &bad).is_err());
        assert!(env.step(None, &[PowerAction::new(0.1, 0.1)]).is_err());
    }

    #[test]
    fn reset_clears_buffers_and_history() {
        let mut env = VecEnv::new(small_cfg(), 2, Domain::Train).unwrap();
        let full = vec![PowerAction::new(1.0, 0.0); 3];
        env.step(None, &full).unwrap();
        assert!(env.prev_snr().iter().any(|g| *g > 0.0));
        env.reset();
        assert!(env.queue().bits.iter().all(|q| *q == 0.0));
        assert!(env.prev_snr().iter().all(|g| *g == 0.0));
        assert_eq!(env.joint_vu_state(), vec![0.0; 15]);
    }

    #[test]
    fn static_placement_is_shared_across_domains() {
        let mut cfg = small_cfg();
        cfg.layout.static_vehicles = true;
        let train = VecEnv::new(cfg.clone(), 9, Domain::Train).unwrap();
        let mut eval = VecEnv::new(cfg, 9, Domain::Eval).unwrap();
        assert_eq!(train.vehicles(), eval.vehicles());
        eval.step(None, &[PowerAction::new(0.5, 0.5); 3]).unwrap();
        eval.reset();
        assert_eq!(train.vehicles(), eval.vehicles());
        assert!(train.vehicles().iter().all(|v| v.speed == 0.0));
    }

    #[test]
    fn element_permutation_leaves_snr_unchanged() {
        let env = VecEnv::new(small_cfg(), 1, Domain::Train).unwrap();
        let mut rng = stream_rng(1, Domain::Train, Stream::Fading);
        let cs = env.channel_model().channels(&env.vehicles()[0].position, sample_small_scale(&mut rng)).unwrap();
        let uniform = PhaseConfig::lossless(vec![5; 4], 3).unwrap();
        let perm = [2, 0, 3, 1];
        let permuted = ChannelSet {
            direct: cs.direct,
            vu_ris: perm.iter().map(|&i| cs.vu_ris[i]).collect(),
            ris_bs: perm.iter().map(|&i| cs.ris_bs[i]).collect(),
        };
        let a = snr(1.0, &cs, Some(&uniform), 1e-14).unwrap();
        let b = snr(1.0, &permuted, Some(&uniform), 1e-14).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn queue_update_is_at_least_arrivals(q in 0.0..1e7f64, o in 0.0..1e7f64, l in 0.0..1e7f64, a in 0.0..1e6f64) {
            let next = update_queue(q, o, l, a);
            prop_assert!(next >= a);
            let expected = (q - o - l).max(0.0) + a;
            prop_assert!((next - expected).abs() <= 1e-12 * expected.max(1.0));
        }

        #[test]
        fn more_offload_power_never_serves_less(seed in 0u64..500, p in 0.0..0.9f64, dp in 0.0..0.1f64) {
            let mut a = VecEnv::new(small_cfg(), seed, Domain::Train).unwrap();
            let mut b = a.clone();
            a.queue = vec![1e9; 3];
            b.queue = vec![1e9; 3];
            let phases = PhaseConfig::lossless(vec![0, 1, 2, 3], 3).unwrap();
            let lo = a.step(Some(&phases), &vec![PowerAction::new(p, 0.2); 3]).unwrap();
            let hi = b.step(Some(&phases), &vec![PowerAction::new(p + dp, 0.2); 3]).unwrap();
            for k in 0..3 {
                prop_assert!(hi.served_offload[k] >= lo.served_offload[k]);
            }
        }

        #[test]
        fn local_reward_is_nonincreasing(po in 0.0..1.0f64, pl in 0.0..1.0f64, q in 0.0..10.0f64, d in 0.0..1.0f64) {
            let r = local_reward(po, pl, q, 1.0, 0.2);
            prop_assert!(r <= 0.0);
            prop_assert!(local_reward(po + d, pl, q, 1.0, 0.2) <= r);
            prop_assert!(local_reward(po, pl + d, q, 1.0, 0.2) <= r);
            prop_assert!(local_reward(po, pl, q + d, 1.0, 0.2) <= r);
        }
    }
}
