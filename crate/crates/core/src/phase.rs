//! Stage one: a single DDPG agent at the BS learns quantized RIS phase
//! shifts that maximize the vehicles' mean spectral efficiency while every
//! vehicle offloads at full power.

use ndarray::{Array1, ArrayView2};
use rand::Rng;

use crate::channel::{exhaustive_best_config, PhaseConfig};
use crate::env::{EnvConfig, PowerAction, VecEnv};
use crate::error::{ensure_len, Result};
use crate::learner::{cols, critic_input_grad, gaussian, hcat, invert_bounded_gradient, DdpgConfig, Learner};
use crate::nn::{Activation, Checkpoint, Mlp, MlpSpec};
use crate::replay::{Batch, ReplayBuffer, Transition};
use crate::rng::{stream_rng, Domain, Stream};

/// Raw actor output (after noise and clipping) plus the configuration it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePolicyOutput {
    pub raw_action: Vec<f64>,
    pub quantized: PhaseConfig,
}

/// Maps raw values in `[-1, 1]` to indices `round((r + 1)/2 * (2^b - 1))`,
/// ties rounding away from zero.
pub fn quantize_phases(raw: &[f64], bits: u32) -> Result<PhaseConfig> {
    let top = f64::from((1u32 << bits) - 1);
    let indices = raw.iter().map(|r| ((r.clamp(-1.0, 1.0) + 1.0) / 2.0 * top).round() as u32).collect();
    PhaseConfig::lossless(indices, bits)
}

/// Deterministic policy output plus clipped Gaussian exploration noise.
pub fn select_action<R: Rng + ?Sized>(actor: &Mlp, state: &[f64], noise_std: f64, rng: &mut R) -> Result<Vec<f64>> {
    let mut a = actor.forward(state)?;
    for v in &mut a {
        *v = (*v + gaussian(rng, noise_std)).clamp(-1.0, 1.0);
    }
    Ok(a)
}

/// Greedy phase decision for the current environment state.
pub fn policy_phases(actor: &Mlp, state: &[f64], bits: u32) -> Result<PhasePolicyOutput> {
    let raw_action = actor.forward(state)?;
    let quantized = quantize_phases(&raw_action, bits)?;
    Ok(PhasePolicyOutput { raw_action, quantized })
}

/// Actor, critic and their targets for the phase-shift agent.
#[derive(Debug, Clone)]
pub struct PhaseAgent {
    pub actor: Learner,
    pub critic: Learner,
    state_dim: usize,
    action_dim: usize,
    discount: f64,
    tau: f64,
    clip: f64,
    invert_gradients: bool,
}

impl PhaseAgent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, elements: usize, cfg: &DdpgConfig, rng: &mut R) -> Result<Self> {
        let actor = MlpSpec::with_hidden(state_dim, &cfg.actor_hidden, elements, Activation::Tanh)?;
        let critic = MlpSpec::with_hidden(state_dim + elements, &cfg.critic_hidden, 1, Activation::Identity)?;
        Ok(Self {
            actor: Learner::new(actor, cfg.actor_lr, rng),
            critic: Learner::new(critic, cfg.critic_lr, rng),
            state_dim,
            action_dim: elements,
            discount: cfg.discount,
            tau: cfg.tau,
            clip: cfg.grad_clip,
            invert_gradients: cfg.invert_gradients,
        })
    }

    /// Bootstrapped targets `r + discount * Q'(s', mu'(s'))`.
    pub fn targets(&self, batch: &Batch) -> Result<Array1<f64>> {
        let next_actions = self.actor.target.forward_batch(batch.next_states.view())?;
        let next_q = self.critic.target.forward_batch(hcat(&[batch.next_states.view(), next_actions.view()]).view())?;
        Ok(&batch.rewards_global + &(next_q.column(0).to_owned() * self.discount))
    }

    /// One critic step toward the target values. Returns the pre-step loss.
    pub fn critic_update(&mut self, batch: &Batch) -> Result<f64> {
        let y = self.targets(batch)?;
        let x = hcat(&[batch.states.view(), batch.actions.view()]);
        self.critic.regress(x.view(), y.view(), self.clip)
    }

    /// Gradient of `-mean Q(s, mu(s))` with respect to the actor parameters.
    pub fn actor_gradient(&self, states: ArrayView2<f64>) -> Result<crate::nn::Gradients> {
        self.actor_gradient_with(states, false)
    }

    fn actor_gradient_with(&self, states: ArrayView2<f64>, invert: bool) -> Result<crate::nn::Gradients> {
        let trace = self.actor.net.forward_trace(states)?;
        let x = hcat(&[states, trace.output().view()]);
        let dx = critic_input_grad(&self.critic.net, x.view(), -1.0)?;
        let mut da = cols(&dx, self.state_dim, self.action_dim).to_owned();
        if invert {
            invert_bounded_gradient(&mut da, trace.output().view(), -1.0, 1.0);
        }
        let (grads, _) = self.actor.net.backward_trace(&trace, da.view())?;
        Ok(grads)
    }

    /// Actor step along the policy gradient, with each action component's
    /// gradient shrunk by its remaining room toward the bound it is pushed to.
    pub fn actor_update(&mut self, batch: &Batch) -> Result<()> {
        let grads = self.actor_gradient_with(batch.states.view(), self.invert_gradients)?;
        self.actor.apply(grads, self.clip)
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        self.critic.soft_update(self.tau)?;
        self.actor.soft_update(self.tau)
    }

    /// Critic step, actor step, then target tracking. Returns the critic loss.
    pub fn learn(&mut self, batch: &Batch) -> Result<f64> {
        let loss = self.critic_update(batch)?;
        self.actor_update(batch)?;
        self.soft_update_targets()?;
        Ok(loss)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_networks(&[
            ("actor", &self.actor.net),
            ("critic", &self.critic.net),
            ("target_actor", &self.actor.target),
            ("target_critic", &self.critic.target),
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEpisode {
    pub episode: usize,
    pub mean_ris_reward: f64,
    pub mean_rate_bps: f64,
    pub noise_std: f64,
}

#[derive(Debug, Clone)]
pub struct PhaseTraining {
    pub agent: PhaseAgent,
    pub episodes: Vec<PhaseEpisode>,
    pub learning_steps: usize,
}

/// Every vehicle offloads at full power and computes nothing locally.
fn full_offload(cfg: &EnvConfig) -> Vec<PowerAction> {
    vec![PowerAction::new(cfg.max_offload_power, 0.0); cfg.num_vehicles()]
}

pub fn train_phase(env_cfg: &EnvConfig, cfg: &DdpgConfig, seed: u64) -> Result<PhaseTraining> {
    train_phase_with(env_cfg, cfg, seed, |_, _| {})
}

/// Like [`train_phase`], calling `on_learn(step, agent)` after every learning step.
pub fn train_phase_with(
    env_cfg: &EnvConfig,
    cfg: &DdpgConfig,
    seed: u64,
    mut on_learn: impl FnMut(usize, &PhaseAgent),
) -> Result<PhaseTraining> {
    cfg.validate()?;
    let mut env = VecEnv::new(env_cfg.clone(), seed, Domain::Train)?;
    let mut init_rng = stream_rng(seed, Domain::Train, Stream::Init);
    let mut explore_rng = stream_rng(seed, Domain::Train, Stream::Exploration);
    let mut replay_rng = stream_rng(seed, Domain::Train, Stream::Replay);
    let mut agent = PhaseAgent::new(env_cfg.ris_state_dim(), env_cfg.elements, cfg, &mut init_rng)?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let powers = full_offload(env_cfg);
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut learning_steps = 0;

    for episode in 0..cfg.episodes {
        env.reset();
        let noise_std = cfg.noise.std_at(episode);
        let (mut reward_sum, mut rate_sum) = (0.0, 0.0);
        for _ in 0..cfg.steps {
            let state = env.ris_state();
            let raw = select_action(&agent.actor.net, &state, noise_std, &mut explore_rng)?;
            let phases = quantize_phases(&raw, env_cfg.phase_bits)?;
            let out = env.step(Some(&phases), &powers)?;
            reward_sum += out.ris_reward;
            rate_sum += out.spectral_efficiency.iter().sum::<f64>() / out.spectral_efficiency.len() as f64;
            buffer.push(Transition {
                state,
                action: raw,
                reward_local: vec![out.ris_reward],
                reward_global: out.ris_reward,
                next_state: env.ris_state(),
            })?;
            if buffer.len() > cfg.batch_size {
                let batch = buffer.sample_batch(cfg.batch_size, &mut replay_rng)?;
                agent.learn(&batch)?;
                learning_steps += 1;
                on_learn(learning_steps, &agent);
            }
        }
        let steps = cfg.steps as f64;
        episodes.push(PhaseEpisode {
            episode,
            mean_ris_reward: reward_sum / steps,
            mean_rate_bps: rate_sum / steps * env_cfg.fading.bandwidth,
            noise_std,
        });
    }
    Ok(PhaseTraining { agent, episodes, learning_steps })
}

/// Greedy evaluation of a phase actor on evaluation-domain slots.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEvaluation {
    /// Mean spectral efficiency per episode under the policy.
    pub achieved: Vec<f64>,
    /// Mean per-slot exhaustive optimum per episode, when requested.
    pub optimum: Option<Vec<f64>>,
}

pub fn evaluate_phase_policy(
    env_cfg: &EnvConfig,
    actor: &Mlp,
    seed: u64,
    episodes: usize,
    steps: usize,
    with_oracle: bool,
) -> Result<PhaseEvaluation> {
    ensure_len(env_cfg.ris_state_dim(), actor.spec().input_dim())?;
    let mut env = VecEnv::new(env_cfg.clone(), seed, Domain::Eval)?;
    let powers = full_offload(env_cfg);
    let mut achieved = Vec::with_capacity(episodes);
    let mut optimum = with_oracle.then(|| Vec::with_capacity(episodes));
    for _ in 0..episodes {
        env.reset();
        let (mut got, mut best) = (0.0, 0.0);
        for _ in 0..steps {
            let decision = policy_phases(actor, &env.ris_state(), env_cfg.phase_bits)?;
            let out = env.step(Some(&decision.quantized), &powers)?;
            got += out.spectral_efficiency.iter().sum::<f64>() / out.spectral_efficiency.len() as f64;
            if with_oracle {
                let (b, _) = exhaustive_best_config(
                    &out.channels,
                    env_cfg.phase_bits,
                    env_cfg.max_offload_power,
                    env_cfg.fading.noise_power,
                )?;
                best += b;
            }
        }
        achieved.push(got / steps as f64);
        if let Some(o) = optimum.as_mut() {
            o.push(best / steps as f64);
        }
    }
    Ok(PhaseEvaluation { achieved, optimum })
}
