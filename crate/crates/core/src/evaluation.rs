//! Testing stage: greedy rollouts of frozen policies with no learning and
//! no exploration noise, logged one row per slot.

use rand::Rng;

use crate::env::{EnvConfig, PowerAction, StepOutcome, VecEnv, VU_ACTION_DIM};
use crate::error::{ensure_len, invalid, Result};
use crate::nn::Mlp;
use crate::power::{to_power, EpisodeAccumulator, PhaseSource, PowerEpisode};
use crate::rng::{stream_rng, Domain, SimRng, Stream};

/// Floor for the logged SNR so that rows stay finite when nothing is offloaded.
pub const SNR_DB_FLOOR: f64 = -300.0;

/// How each slot's powers are chosen.
#[derive(Debug, Clone)]
pub enum PowerPolicy {
    /// One actor per vehicle, each seeing only its own state.
    Decentralized(Vec<Mlp>),
    /// One actor over the joint state emitting `[p_o1, p_l1, p_o2, ...]`.
    Centralized(Mlp),
    MaxPower,
    /// Independent uniform draws in `(0, P_max]`.
    RandomPower,
}

impl PowerPolicy {
    pub fn act(&self, env: &VecEnv, rng: &mut SimRng) -> Result<Vec<PowerAction>> {
        let cfg = env.config();
        let k = cfg.num_vehicles();
        let (po, pl) = (cfg.max_offload_power, cfg.max_local_power);
        match self {
            PowerPolicy::Decentralized(actors) => {
                ensure_len(k, actors.len())?;
                actors
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let u = a.forward(&env.vu_state(i))?;
                        Ok(to_power([u[0], u[1]], po, pl))
                    })
                    .collect()
            }
            PowerPolicy::Centralized(actor) => {
                let u = actor.forward(&env.joint_vu_state())?;
                ensure_len(k * VU_ACTION_DIM, u.len())?;
                Ok(u.chunks(VU_ACTION_DIM).map(|c| to_power([c[0], c[1]], po, pl)).collect())
            }
            PowerPolicy::MaxPower => Ok(vec![PowerAction::new(po, pl); k]),
            PowerPolicy::RandomPower => Ok((0..k)
                .map(|_| {
                    let uo = 1.0 - rng.random::<f64>();
                    let ul = 1.0 - rng.random::<f64>();
                    PowerAction::new(uo * po, ul * pl)
                })
                .collect()),
        }
    }
}

/// Per-vehicle slice of a [`MetricsRow`].
#[derive(Debug, Clone, PartialEq)]
pub struct VuMetrics {
    pub power_o: f64,
    pub power_l: f64,
    pub queue_bits: f64,
    pub snr_db: f64,
    pub r_local: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub episode: usize,
    pub step: usize,
    pub scheme: String,
    pub r_global: f64,
    pub vus: Vec<VuMetrics>,
}

impl MetricsRow {
    pub fn from_outcome(episode: usize, step: usize, scheme: &str, out: &StepOutcome) -> Self {
        let vus = (0..out.actions.len())
            .map(|k| VuMetrics {
                power_o: out.actions[k].offload,
                power_l: out.actions[k].local,
                queue_bits: out.queue.bits[k],
                snr_db: snr_db(out.snr[k]),
                r_local: out.r_local[k],
            })
            .collect();
        Self { episode, step, scheme: scheme.to_string(), r_global: out.r_global, vus }
    }

    pub fn is_finite(&self) -> bool {
        self.r_global.is_finite()
            && self
                .vus
                .iter()
                .all(|v| [v.power_o, v.power_l, v.queue_bits, v.snr_db, v.r_local].iter().all(|x| x.is_finite()))
    }
}

pub fn snr_db(gamma: f64) -> f64 {
    if gamma > 0.0 {
        (10.0 * gamma.log10()).max(SNR_DB_FLOOR)
    } else {
        SNR_DB_FLOOR
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSummary {
    /// `p_o + p_l` averaged over slots and vehicles.
    pub mean_power_per_vu: f64,
    pub mean_queue_bits: f64,
    pub mean_r_global: f64,
    pub mean_spectral_efficiency: f64,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub rows: Vec<MetricsRow>,
    pub episodes: Vec<PowerEpisode>,
    pub summary: RolloutSummary,
}

/// Runs `episodes` noise-free episodes of `steps` slots each.
pub fn rollout(
    env_cfg: &EnvConfig,
    phases: &PhaseSource,
    policy: &PowerPolicy,
    seed: u64,
    domain: Domain,
    episodes: usize,
    steps: usize,
    scheme: &str,
) -> Result<Rollout> {
    if episodes == 0 || steps == 0 {
        return Err(invalid("rollout needs at least one episode and one step"));
    }
    let k = env_cfg.num_vehicles();
    let mut env = VecEnv::new(env_cfg.clone(), seed, domain)?;
    let mut phase_rng = stream_rng(seed, domain, Stream::Phases);
    let mut power_rng = stream_rng(seed, domain, Stream::Powers);
    let mut rows = Vec::with_capacity(episodes * steps);
    let mut logs = Vec::with_capacity(episodes);
    let (mut power, mut queue, mut reward, mut se) = (0.0, 0.0, 0.0, 0.0);
    for episode in 0..episodes {
        env.reset();
        let mut acc = EpisodeAccumulator::new(k);
        for step in 0..steps {
            let ris = phases.select(&env, &mut phase_rng)?;
            let actions = policy.act(&env, &mut power_rng)?;
            let out = env.step(ris.as_ref(), &actions)?;
            power += out.actions.iter().map(PowerAction::total).sum::<f64>() / k as f64;
            queue += out.queue.bits.iter().sum::<f64>() / k as f64;
            reward += out.r_global;
            se += out.spectral_efficiency.iter().sum::<f64>() / k as f64;
            acc.record(&out);
            rows.push(MetricsRow::from_outcome(episode, step, scheme, &out));
        }
        logs.push(acc.finish(episode));
    }
    let n = (episodes * steps) as f64;
    Ok(Rollout {
        rows,
        episodes: logs,
        summary: RolloutSummary {
            mean_power_per_vu: power / n,
            mean_queue_bits: queue / n,
            mean_r_global: reward / n,
            mean_spectral_efficiency: se / n,
        },
    })
}
