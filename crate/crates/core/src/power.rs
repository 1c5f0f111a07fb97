//! Stage two: one actor per vehicle allocates offload and local power under
//! a frozen RIS phase policy. Training uses twin global critics over the
//! joint state-action (min-target), a local critic per agent and delayed
//! local/actor updates.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::PhaseConfig;
use crate::env::{EnvConfig, PowerAction, VecEnv, VU_ACTION_DIM, VU_STATE_DIM};
use crate::error::{invalid, Result};
use crate::learner::{cols, critic_input_grad, gaussian, hcat, invert_bounded_gradient, DdpgConfig, Learner};
use crate::nn::{sigmoid, Activation, Checkpoint, Gradients, Mlp, MlpSpec};
use crate::phase::{policy_phases, quantize_phases};
use crate::replay::{Batch, ReplayBuffer, Transition};
use crate::rng::{stream_rng, Domain, SimRng, Stream};

/// Smallest power an agent may choose, keeping allocations strictly positive.
pub const MIN_POWER: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaddpgConfig {
    pub ddpg: DdpgConfig,
    /// Delay between actor updates, counted in episodes or gradient steps
    /// depending on `schedule`.
    pub policy_delay: usize,
    pub schedule: UpdateSchedule,
}

/// When learning happens relative to data collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateSchedule {
    /// After each episode: `steps` global-critic steps; local critics and
    /// actors join in on episodes divisible by the delay.
    #[default]
    Episode,
    /// One global and local critic step per environment step; actors every
    /// `policy_delay`-th step.
    Step,
}

impl Default for MaddpgConfig {
    fn default() -> Self {
        Self { ddpg: DdpgConfig::default(), policy_delay: 2, schedule: UpdateSchedule::Episode }
    }
}

impl MaddpgConfig {
    pub fn validate(&self) -> Result<()> {
        self.ddpg.validate()?;
        if self.policy_delay == 0 {
            return Err(invalid("policy delay must be at least 1"));
        }
        Ok(())
    }
}

/// Where the RIS configuration comes from during power allocation.
#[derive(Debug, Clone)]
pub enum PhaseSource {
    /// Frozen phase actor from stage one.
    Trained(Mlp),
    /// Uniformly random indices every slot.
    Random,
    /// No RIS: the reflected path is removed from the SNR.
    NoRis,
}

impl PhaseSource {
    pub fn select(&self, env: &VecEnv, rng: &mut SimRng) -> Result<Option<PhaseConfig>> {
        let cfg = env.config();
        match self {
            PhaseSource::Trained(actor) => Ok(Some(policy_phases(actor, &env.ris_state(), cfg.phase_bits)?.quantized)),
            PhaseSource::Random => {
                let levels = 1u32 << cfg.phase_bits;
                let idx = (0..cfg.elements).map(|_| rng.random_range(0..levels)).collect();
                Ok(Some(PhaseConfig::lossless(idx, cfg.phase_bits)?))
            }
            PhaseSource::NoRis => Ok(None),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            PhaseSource::Trained(_) => "trained-phase",
            PhaseSource::Random => "random-phase",
            PhaseSource::NoRis => "no-ris",
        }
    }
}

/// Maps a normalized action in `(0, 1]^2` to watts, clamped to `[MIN_POWER, P_max]`.
pub fn to_power(unit: [f64; 2], max_offload: f64, max_local: f64) -> PowerAction {
    PowerAction::new(
        (unit[0] * max_offload).clamp(MIN_POWER, max_offload),
        (unit[1] * max_local).clamp(MIN_POWER, max_local),
    )
}

/// Squashes pre-activations (plus optional Gaussian noise) through the sigmoid.
pub fn squash_with_noise<R: Rng + ?Sized>(pre: &[f64], noise_std: f64, rng: &mut R) -> Vec<f64> {
    pre.iter().map(|z| sigmoid(z + gaussian(rng, noise_std))).collect()
}

/// One agent's power decision. Returns watts and the normalized action the critics see.
pub fn select_powers<R: Rng + ?Sized>(
    actor: &Mlp,
    state: &[f64],
    noise_std: f64,
    rng: &mut R,
    max_offload: f64,
    max_local: f64,
) -> Result<(PowerAction, [f64; 2])> {
    let x = ArrayView2::from_shape((1, state.len()), state).map_err(|e| invalid(e.to_string()))?;
    let trace = actor.forward_trace(x)?;
    let pre = trace.pre_output().row(0).to_vec();
    let u = squash_with_noise(&pre, noise_std, rng);
    let p = to_power([u[0], u[1]], max_offload, max_local);
    Ok((p, [p.offload / max_offload, p.local / max_local]))
}

/// Twin-critic bootstrap target `r + discount * min(q1, q2)`.
pub fn global_target(reward: f64, discount: f64, q1: f64, q2: f64) -> f64 {
    reward + discount * q1.min(q2)
}

#[derive(Debug, Clone)]
pub struct AgentNets {
    pub actor: Learner,
    pub local_critic: Learner,
}

#[derive(Debug, Clone)]
pub struct GlobalCritics {
    pub twins: [Learner; 2],
}

/// Which critic terms feed an actor's policy gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActorTerms {
    pub global: bool,
    pub local: bool,
}

impl ActorTerms {
    pub const BOTH: ActorTerms = ActorTerms { global: true, local: true };
}

#[derive(Debug, Clone)]
pub struct Maddpg {
    pub agents: Vec<AgentNets>,
    pub globals: GlobalCritics,
    discount: f64,
    tau: f64,
    clip: f64,
    invert_gradients: bool,
}

fn agent_state(m: &Array2<f64>, k: usize) -> ArrayView2<'_, f64> {
    cols(m, k * VU_STATE_DIM, VU_STATE_DIM)
}

fn agent_action(m: &Array2<f64>, k: usize) -> ArrayView2<'_, f64> {
    cols(m, k * VU_ACTION_DIM, VU_ACTION_DIM)
}

impl Maddpg {
    pub fn new<R: Rng + ?Sized>(agents: usize, cfg: &DdpgConfig, rng: &mut R) -> Result<Self> {
        if agents == 0 {
            return Err(invalid("need at least one agent"));
        }
        let actor = MlpSpec::with_hidden(VU_STATE_DIM, &cfg.actor_hidden, VU_ACTION_DIM, Activation::Sigmoid)?;
        let local = MlpSpec::with_hidden(VU_STATE_DIM + VU_ACTION_DIM, &cfg.critic_hidden, 1, Activation::Identity)?;
        let joint = agents * (VU_STATE_DIM + VU_ACTION_DIM);
        let global = MlpSpec::with_hidden(joint, &cfg.critic_hidden, 1, Activation::Identity)?;
        let agents = (0..agents)
            .map(|_| AgentNets {
                actor: Learner::new(actor.clone(), cfg.actor_lr, rng),
                local_critic: Learner::new(local.clone(), cfg.critic_lr, rng),
            })
            .collect();
        let twins = [Learner::new(global.clone(), cfg.critic_lr, rng), Learner::new(global, cfg.critic_lr, rng)];
        Ok(Self {
            agents,
            globals: GlobalCritics { twins },
            discount: cfg.discount,
            tau: cfg.tau,
            clip: cfg.grad_clip,
            invert_gradients: cfg.invert_gradients,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn actors(&self) -> Vec<Mlp> {
        self.agents.iter().map(|a| a.actor.net.clone()).collect()
    }

    /// Every agent acts on its own slice of the joint observation.
    pub fn act<R: Rng + ?Sized>(
        &self,
        joint_state: &[f64],
        noise_std: f64,
        rng: &mut R,
        env: &EnvConfig,
    ) -> Result<(Vec<PowerAction>, Vec<f64>)> {
        let mut powers = Vec::with_capacity(self.agents.len());
        let mut unit = Vec::with_capacity(self.agents.len() * VU_ACTION_DIM);
        for (k, agent) in self.agents.iter().enumerate() {
            let s = &joint_state[k * VU_STATE_DIM..(k + 1) * VU_STATE_DIM];
            let (p, u) = select_powers(&agent.actor.net, s, noise_std, rng, env.max_offload_power, env.max_local_power)?;
            powers.push(p);
            unit.extend_from_slice(&u);
        }
        Ok((powers, unit))
    }

    /// Joint next action from every agent's target actor.
    fn target_joint_action(&self, next_states: &Array2<f64>) -> Result<Array2<f64>> {
        let parts = self
            .agents
            .iter()
            .enumerate()
            .map(|(k, a)| a.actor.target.forward_batch(agent_state(next_states, k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(hcat(&parts.iter().map(|p| p.view()).collect::<Vec<_>>()))
    }

    /// Shared target for both twins.
    pub fn global_targets(&self, batch: &Batch) -> Result<Array1<f64>> {
        let next_actions = self.target_joint_action(&batch.next_states)?;
        let x = hcat(&[batch.next_states.view(), next_actions.view()]);
        let q1 = self.globals.twins[0].target.forward_batch(x.view())?;
        let q2 = self.globals.twins[1].target.forward_batch(x.view())?;
        Ok(Array1::from_iter(
            (0..batch.len()).map(|i| global_target(batch.rewards_global[i], self.discount, q1[[i, 0]], q2[[i, 0]])),
        ))
    }

    pub fn global_critic_update(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let y = self.global_targets(batch)?;
        let x = hcat(&[batch.states.view(), batch.actions.view()]);
        let clip = self.clip;
        let [a, b] = &mut self.globals.twins;
        Ok((a.regress(x.view(), y.view(), clip)?, b.regress(x.view(), y.view(), clip)?))
    }

    pub fn soft_update_globals(&mut self) -> Result<()> {
        for t in &mut self.globals.twins {
            t.soft_update(self.tau)?;
        }
        Ok(())
    }

    pub fn local_targets(&self, k: usize, batch: &Batch) -> Result<Array1<f64>> {
        let agent = &self.agents[k];
        let next_s = agent_state(&batch.next_states, k);
        let next_a = agent.actor.target.forward_batch(next_s)?;
        let q = agent.local_critic.target.forward_batch(hcat(&[next_s, next_a.view()]).view())?;
        Ok(&batch.rewards_local.column(k) + &(q.column(0).to_owned() * self.discount))
    }

    pub fn local_critic_update(&mut self, k: usize, batch: &Batch) -> Result<f64> {
        let y = self.local_targets(k, batch)?;
        let x = hcat(&[agent_state(&batch.states, k), agent_action(&batch.actions, k)]);
        let clip = self.clip;
        self.agents[k].local_critic.regress(x.view(), y.view(), clip)
    }

    /// Gradient of `-(mean Q_global + mean Q_local)` with agent `k`'s action
    /// replaced by its current policy output; other agents keep their replayed actions.
    pub fn actor_gradient(&self, k: usize, batch: &Batch, terms: ActorTerms) -> Result<Gradients> {
        self.actor_gradient_with(k, batch, terms, false)
    }

    fn actor_gradient_with(&self, k: usize, batch: &Batch, terms: ActorTerms, invert: bool) -> Result<Gradients> {
        let agent = &self.agents[k];
        let s_k = agent_state(&batch.states, k);
        let trace = agent.actor.net.forward_trace(s_k)?;
        let a_k = trace.output();
        let mut da = Array2::<f64>::zeros(a_k.raw_dim());
        if terms.global {
            let mut joint_a = batch.actions.clone();
            joint_a.slice_mut(s![.., k * VU_ACTION_DIM..(k + 1) * VU_ACTION_DIM]).assign(a_k);
            let x = hcat(&[batch.states.view(), joint_a.view()]);
            let dx = critic_input_grad(&self.globals.twins[0].net, x.view(), -1.0)?;
            da += &cols(&dx, batch.states.ncols() + k * VU_ACTION_DIM, VU_ACTION_DIM);
        }
        if terms.local {
            let x = hcat(&[s_k, a_k.view()]);
            let dx = critic_input_grad(&agent.local_critic.net, x.view(), -1.0)?;
            da += &cols(&dx, VU_STATE_DIM, VU_ACTION_DIM);
        }
        if invert {
            invert_bounded_gradient(&mut da, a_k.view(), 0.0, 1.0);
        }
        let (grads, _) = agent.actor.net.backward_trace(&trace, da.view())?;
        Ok(grads)
    }

    /// Actor step; with gradient inverting enabled each action component's
    /// gradient is shrunk by its room toward the bound it is pushed to.
    pub fn actor_update(&mut self, k: usize, batch: &Batch, terms: ActorTerms) -> Result<()> {
        let grads = self.actor_gradient_with(k, batch, terms, self.invert_gradients)?;
        let clip = self.clip;
        self.agents[k].actor.apply(grads, clip)
    }

    pub fn soft_update_agent(&mut self, k: usize) -> Result<()> {
        let tau = self.tau;
        self.agents[k].actor.soft_update(tau)?;
        self.agents[k].local_critic.soft_update(tau)
    }

    pub fn all_finite(&self) -> bool {
        self.agents.iter().all(|a| a.actor.net.is_finite() && a.local_critic.net.is_finite())
            && self.globals.twins.iter().all(|t| t.net.is_finite())
    }

    pub fn actor_checkpoint(&self, k: usize) -> Checkpoint {
        Checkpoint::from_networks(&[("actor", &self.agents[k].actor.net)])
    }

    pub fn local_critic_checkpoint(&self, k: usize) -> Checkpoint {
        Checkpoint::from_networks(&[("critic", &self.agents[k].local_critic.net)])
    }

    pub fn global_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_networks(&[("twin1", &self.globals.twins[0].net), ("twin2", &self.globals.twins[1].net)])
    }
}

/// Per-episode averages for power-allocation schemes (learned or heuristic).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerEpisode {
    pub episode: usize,
    pub r_global_mean: f64,
    pub r_local_mean: Vec<f64>,
    pub p_offload_mean: Vec<f64>,
    pub p_local_mean: Vec<f64>,
    /// Post-slot buffer averaged over slots and vehicles.
    pub queue_mean_bits: f64,
}

impl PowerEpisode {
    pub fn mean_power_per_vu(&self) -> f64 {
        let k = self.p_offload_mean.len() as f64;
        (self.p_offload_mean.iter().sum::<f64>() + self.p_local_mean.iter().sum::<f64>()) / k
    }
}

/// Accumulates [`PowerEpisode`] statistics over the slots of one episode.
#[derive(Debug, Clone)]
pub(crate) struct EpisodeAccumulator {
    steps: usize,
    r_global: f64,
    r_local: Vec<f64>,
    p_o: Vec<f64>,
    p_l: Vec<f64>,
    queue: f64,
}

impl EpisodeAccumulator {
    pub(crate) fn new(k: usize) -> Self {
        Self { steps: 0, r_global: 0.0, r_local: vec![0.0; k], p_o: vec![0.0; k], p_l: vec![0.0; k], queue: 0.0 }
    }

    pub(crate) fn record(&mut self, out: &crate::env::StepOutcome) {
        self.steps += 1;
        self.r_global += out.r_global;
        for k in 0..self.r_local.len() {
            self.r_local[k] += out.r_local[k];
            self.p_o[k] += out.actions[k].offload;
            self.p_l[k] += out.actions[k].local;
        }
        self.queue += out.queue.bits.iter().sum::<f64>() / out.queue.bits.len() as f64;
    }

    pub(crate) fn finish(self, episode: usize) -> PowerEpisode {
        let n = self.steps.max(1) as f64;
        let avg = |v: Vec<f64>| v.into_iter().map(|x| x / n).collect();
        PowerEpisode {
            episode,
            r_global_mean: self.r_global / n,
            r_local_mean: avg(self.r_local),
            p_offload_mean: avg(self.p_o),
            p_local_mean: avg(self.p_l),
            queue_mean_bits: self.queue / n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PowerTraining {
    pub model: Maddpg,
    pub episodes: Vec<PowerEpisode>,
    /// `r_global - mean(r_local)` worst case over all logged slots.
    pub max_reward_mismatch: f64,
}

pub fn train_power(env_cfg: &EnvConfig, phases: &PhaseSource, cfg: &MaddpgConfig, seed: u64) -> Result<PowerTraining> {
    cfg.validate()?;
    if let PhaseSource::Trained(actor) = phases {
        if actor.spec().input_dim() != env_cfg.ris_state_dim() || actor.spec().output_dim() != env_cfg.elements {
            return Err(invalid(format!("phase actor {} does not fit this scenario", actor.spec())));
        }
    }
    let d = &cfg.ddpg;
    let k = env_cfg.num_vehicles();
    let mut env = VecEnv::new(env_cfg.clone(), seed, Domain::Train)?;
    let mut init_rng = stream_rng(seed, Domain::Train, Stream::Init);
    let mut explore_rng = stream_rng(seed, Domain::Train, Stream::Exploration);
    let mut replay_rng = stream_rng(seed, Domain::Train, Stream::Replay);
    let mut phase_rng = stream_rng(seed, Domain::Train, Stream::Phases);
    let mut model = Maddpg::new(k, d, &mut init_rng)?;
    let mut buffer = ReplayBuffer::new(d.replay_capacity);
    let mut episodes = Vec::with_capacity(d.episodes);
    let mut max_reward_mismatch: f64 = 0.0;
    let mut updates = 0usize;

    for episode in 0..d.episodes {
        env.reset();
        let noise_std = d.noise.std_at(episode);
        let mut acc = EpisodeAccumulator::new(k);
        for _ in 0..d.steps {
            let ris = phases.select(&env, &mut phase_rng)?;
            let state = env.joint_vu_state();
            let (powers, unit) = model.act(&state, noise_std, &mut explore_rng, env_cfg)?;
            let out = env.step(ris.as_ref(), &powers)?;
            let mean_local = out.r_local.iter().sum::<f64>() / k as f64;
            max_reward_mismatch = max_reward_mismatch.max((out.r_global - mean_local).abs());
            acc.record(&out);
            buffer.push(Transition {
                state,
                action: unit,
                reward_local: out.r_local.clone(),
                reward_global: out.r_global,
                next_state: env.joint_vu_state(),
            })?;
            if cfg.schedule == UpdateSchedule::Step && buffer.len() > d.batch_size {
                let batch = buffer.sample_batch(d.batch_size, &mut replay_rng)?;
                model.global_critic_update(&batch)?;
                model.soft_update_globals()?;
                for agent in 0..k {
                    model.local_critic_update(agent, &batch)?;
                }
                updates += 1;
                if updates % cfg.policy_delay == 0 {
                    for agent in 0..k {
                        model.actor_update(agent, &batch, ActorTerms::BOTH)?;
                        model.soft_update_agent(agent)?;
                    }
                }
            }
        }
        if cfg.schedule == UpdateSchedule::Episode && buffer.len() > d.batch_size {
            let delayed = episode % cfg.policy_delay == 0;
            for _ in 0..d.steps {
                let batch = buffer.sample_batch(d.batch_size, &mut replay_rng)?;
                model.global_critic_update(&batch)?;
                model.soft_update_globals()?;
                if delayed {
                    for agent in 0..k {
                        model.local_critic_update(agent, &batch)?;
                        model.actor_update(agent, &batch, ActorTerms::BOTH)?;
                        model.soft_update_agent(agent)?;
                    }
                }
            }
        }
        episodes.push(acc.finish(episode));
    }
    Ok(PowerTraining { model, episodes, max_reward_mismatch })
}

/// Rebuilds a frozen phase actor from a stage-one checkpoint.
pub fn phase_actor_from_checkpoint(ck: &Checkpoint) -> Result<Mlp> {
    ck.network("actor")
}

/// Quantized phases for `raw`, exposed for callers that drive the RIS directly.
pub fn phases_from_raw(raw: &[f64], bits: u32) -> Result<PhaseConfig> {
    quantize_phases(raw, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use crate::replay::Batch;

    fn tiny_ddpg() -> DdpgConfig {
        DdpgConfig {
            actor_hidden: vec![6],
            critic_hidden: vec![8],
            batch_size: 8,
            episodes: 4,
            steps: 10,
            replay_capacity: 1000,
            ..DdpgConfig::default()
        }
    }

    fn tiny_env(k: usize) -> EnvConfig {
        let mut e = EnvConfig { elements: 4, phase_bits: 2, ..EnvConfig::default() };
        e.layout.num_vehicles = k;
        e
    }

    fn batch(rows: usize, k: usize, seed: u64) -> Batch {
        let mut rng = stream_rng(seed, Domain::Train, Stream::Replay);
        let mut m = |c: usize, lo: f64, hi: f64| Array2::from_shape_simple_fn((rows, c), || rng.random_range(lo..hi));
        let states = m(k * VU_STATE_DIM, -1.0, 1.0);
        let actions = m(k * VU_ACTION_DIM, 0.0, 1.0);
        let next_states = m(k * VU_STATE_DIM, -1.0, 1.0);
        let rewards_local = m(k, -2.0, 0.0);
        let rewards_global = rewards_local.mean_axis(ndarray::Axis(1)).unwrap();
        Batch { states, actions, rewards_local, rewards_global, next_states }
    }

    fn constant(input: usize, c: f64) -> Mlp {
        let spec = MlpSpec::new(vec![input, 1], Activation::Identity).unwrap();
        Mlp::from_layers(spec, vec![Layer { weight: Array2::zeros((input, 1)), bias: Array1::from(vec![c]) }]).unwrap()
    }

    #[test]
    fn power_mapping() {
        let p = to_power([0.5, 0.5], 1.0, 1.0);
        assert_eq!(p, PowerAction::new(0.5, 0.5));
        let mut rng = stream_rng(0, Domain::Train, Stream::Init);
        assert_eq!(squash_with_noise(&[0.0, 0.0], 0.0, &mut rng), vec![0.5, 0.5]);
        let p = to_power([0.0, 2.0], 1.0, 1.0);
        assert_eq!(p, PowerAction::new(MIN_POWER, 1.0));
    }

    #[test]
    fn power_selection_bounds_and_determinism() {
        let mut rng = stream_rng(1, Domain::Train, Stream::Init);
        let actor = Mlp::init(MlpSpec::new(vec![5, 8, 2], Activation::Sigmoid).unwrap(), &mut rng);
        let s = [0.3, 1.0, 2.0, 2.7, 4.0];
        let (a, _) = select_powers(&actor, &s, 0.0, &mut rng, 1.0, 1.0).unwrap();
        let (b, _) = select_powers(&actor, &s, 0.0, &mut rng, 1.0, 1.0).unwrap();
        assert_eq!(a, b);
        for _ in 0..200 {
            let (p, u) = select_powers(&actor, &s, 50.0, &mut rng, 1.0, 0.5).unwrap();
            assert!(p.offload >= MIN_POWER && p.offload <= 1.0);
            assert!(p.local >= MIN_POWER && p.local <= 0.5);
            assert!((u[1] * 0.5 - p.local).abs() < 1e-15);
        }
    }

    #[test]
    fn twin_target_uses_minimum() {
        assert!((global_target(1.0, 0.99, 3.0, 5.0) - 3.97).abs() < 1e-12);
        assert_eq!(global_target(1.0, 0.99, 3.0, 5.0), global_target(1.0, 0.99, 5.0, 3.0));
        assert_eq!(global_target(-2.5, 0.0, 3.0, 5.0), -2.5);
    }

    #[test]
    fn swapping_target_twins_leaves_targets_unchanged() {
        let mut rng = stream_rng(2, Domain::Train, Stream::Init);
        let mut m = Maddpg::new(3, &tiny_ddpg(), &mut rng).unwrap();
        let b = batch(16, 3, 1);
        let y = m.global_targets(&b).unwrap();
        m.globals.twins.swap(0, 1);
        assert_eq!(m.global_targets(&b).unwrap(), y);
    }

    #[test]
    fn local_fixed_point_and_zero_discount() {
        let mut rng = stream_rng(3, Domain::Train, Stream::Init);
        let cfg = tiny_ddpg();
        let mut m = Maddpg::new(2, &cfg, &mut rng).unwrap();
        let c = -4.0;
        m.agents[1].local_critic = Learner::from_net(constant(7, c), cfg.critic_lr);
        let mut b = batch(8, 2, 2);
        b.rewards_local.column_mut(1).fill(c * (1.0 - cfg.discount));
        assert!(m.local_critic_update(1, &b).unwrap() < 1e-20);

        let mut m = Maddpg::new(2, &DdpgConfig { discount: 0.0, ..cfg }, &mut rng).unwrap();
        let y = m.local_targets(0, &b).unwrap();
        assert_eq!(y, b.rewards_local.column(0).to_owned());
        let yg = m.global_targets(&b).unwrap();
        assert_eq!(yg, b.rewards_global);
        m.global_critic_update(&b).unwrap();
    }

    #[test]
    fn local_loss_decreases_on_frozen_batch() {
        let mut rng = stream_rng(4, Domain::Train, Stream::Init);
        let cfg = DdpgConfig { critic_hidden: vec![32], ..tiny_ddpg() };
        let mut m = Maddpg::new(2, &cfg, &mut rng).unwrap();
        let b = batch(32, 2, 3);
        let first = m.local_critic_update(0, &b).unwrap();
        let mut last = first;
        for _ in 0..49 {
            last = m.local_critic_update(0, &b).unwrap();
        }
        assert!(last.is_finite() && last < first);
    }

    #[test]
    fn insensitive_critics_leave_actor_unchanged() {
        let mut rng = stream_rng(5, Domain::Train, Stream::Init);
        let cfg = tiny_ddpg();
        let mut m = Maddpg::new(2, &cfg, &mut rng).unwrap();
        m.globals.twins[0] = Learner::from_net(constant(14, 1.0), cfg.critic_lr);
        m.agents[0].local_critic = Learner::from_net(constant(7, 1.0), cfg.critic_lr);
        let before = m.agents[0].actor.net.clone();
        m.actor_update(0, &batch(8, 2, 4), ActorTerms::BOTH).unwrap();
        assert_eq!(m.agents[0].actor.net, before);
    }

    #[test]
    fn actor_gradient_matches_finite_differences_per_term() {
        use crate::nn::mlp::max_finite_difference_error;
        let mut rng = stream_rng(8, Domain::Train, Stream::Init);
        let m = Maddpg::new(3, &tiny_ddpg(), &mut rng).unwrap();
        let b = batch(6, 3, 11);
        let k = 1;
        let s_k = b.states.slice(s![.., k * VU_STATE_DIM..(k + 1) * VU_STATE_DIM]).to_owned();
        let global = |actor: &Mlp| {
            let mut joint = b.actions.clone();
            joint.slice_mut(s![.., k * VU_ACTION_DIM..(k + 1) * VU_ACTION_DIM]).assign(&actor.forward_batch(s_k.view()).unwrap());
            let x = hcat(&[b.states.view(), joint.view()]);
            -m.globals.twins[0].net.forward_batch(x.view()).unwrap().mean().unwrap()
        };
        let local = |actor: &Mlp| {
            let x = hcat(&[s_k.view(), actor.forward_batch(s_k.view()).unwrap().view()]);
            -m.agents[k].local_critic.net.forward_batch(x.view()).unwrap().mean().unwrap()
        };
        let net = &m.agents[k].actor.net;
        let only_global = m.actor_gradient(k, &b, ActorTerms { global: true, local: false }).unwrap();
        let only_local = m.actor_gradient(k, &b, ActorTerms { global: false, local: true }).unwrap();
        let both = m.actor_gradient(k, &b, ActorTerms::BOTH).unwrap();
        assert!(max_finite_difference_error(net, &only_global, &global, 1e-5) <= 1e-3);
        assert!(max_finite_difference_error(net, &only_local, &local, 1e-5) <= 1e-3);
        assert!(max_finite_difference_error(net, &both, |a: &Mlp| global(a) + local(a), 1e-5) <= 1e-3);
    }

    #[test]
    fn identical_agents_act_identically() {
        let mut rng = stream_rng(6, Domain::Train, Stream::Init);
        let mut m = Maddpg::new(3, &tiny_ddpg(), &mut rng).unwrap();
        let first = m.agents[0].clone();
        m.agents.iter_mut().for_each(|a| *a = first.clone());
        let s: Vec<f64> = [0.5, 0.1, 0.2, -0.2, 1.0].repeat(3);
        let (p, _) = m.act(&s, 0.0, &mut rng, &tiny_env(3)).unwrap();
        assert!(p.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn training_is_finite_and_consistent() {
        let env = tiny_env(2);
        for schedule in [UpdateSchedule::Episode, UpdateSchedule::Step] {
            let cfg = MaddpgConfig { ddpg: tiny_ddpg(), policy_delay: 1, schedule };
            let run = train_power(&env, &PhaseSource::Random, &cfg, 5).unwrap();
            assert_eq!(run.episodes.len(), 4);
            assert!(run.model.all_finite());
            assert!(run.max_reward_mismatch <= 1e-12);
            let again = train_power(&env, &PhaseSource::Random, &cfg, 5).unwrap();
            assert_eq!(run.episodes, again.episodes);
        }
    }

    #[test]
    fn trained_phase_source_must_match_scenario() {
        let mut rng = stream_rng(7, Domain::Train, Stream::Init);
        let wrong = Mlp::init(MlpSpec::new(vec![3, 4], Activation::Tanh).unwrap(), &mut rng);
        let cfg = MaddpgConfig { ddpg: tiny_ddpg(), policy_delay: 2, ..MaddpgConfig::default() };
        assert!(train_power(&tiny_env(2), &PhaseSource::Trained(wrong), &cfg, 0).is_err());
    }
}
