//! Comparison schemes: a single centralized power agent (DDPG or TD3), the
//! multi-agent model retrained under random or absent RIS phases, and two
//! fixed power heuristics.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, VecEnv, VU_ACTION_DIM, VU_STATE_DIM};
use crate::error::{invalid, Error, Result};
use crate::evaluation::{rollout, PowerPolicy, Rollout};
use crate::learner::{cols, critic_input_grad, gaussian, hcat, invert_bounded_gradient, DdpgConfig, Learner};
use crate::nn::{sigmoid, Activation, Checkpoint, Mlp, MlpSpec};
use crate::power::{squash_with_noise, to_power, train_power, EpisodeAccumulator, MaddpgConfig, PhaseSource, PowerEpisode};
use crate::replay::{Batch, ReplayBuffer, Transition};
use crate::rng::{stream_rng, Domain, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    CentralizedDdpg,
    CentralizedTd3,
    RandomPhase,
    NoRis,
    MaxPower,
    RandomPower,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::CentralizedDdpg,
        BaselineKind::CentralizedTd3,
        BaselineKind::RandomPhase,
        BaselineKind::NoRis,
        BaselineKind::MaxPower,
        BaselineKind::RandomPower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::CentralizedDdpg => "centralized-ddpg",
            BaselineKind::CentralizedTd3 => "centralized-td3",
            BaselineKind::RandomPhase => "random-phase",
            BaselineKind::NoRis => "no-ris",
            BaselineKind::MaxPower => "max-power",
            BaselineKind::RandomPower => "random-power",
        }
    }

    /// Schemes that keep the stage-one phase policy.
    pub fn needs_phase_policy(self) -> bool {
        !matches!(self, BaselineKind::RandomPhase | BaselineKind::NoRis)
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown baseline `{s}`")))
    }
}

/// Twin-delayed extras for the centralized agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Td3Params {
    /// Std of the noise added to target actions (pre-squash).
    pub smoothing_std: f64,
    pub smoothing_clip: f64,
    /// Actor and target updates happen every this many critic updates.
    pub policy_delay: usize,
}

impl Default for Td3Params {
    fn default() -> Self {
        Self { smoothing_std: 0.2, smoothing_clip: 0.5, policy_delay: 2 }
    }
}

/// One agent over the joint state emitting all `2K` normalized powers.
#[derive(Debug, Clone)]
pub struct CentralizedAgent {
    pub actor: Learner,
    pub critics: Vec<Learner>,
    td3: Option<Td3Params>,
    discount: f64,
    tau: f64,
    clip: f64,
    invert_gradients: bool,
    updates: usize,
}

impl CentralizedAgent {
    pub fn new<R: Rng + ?Sized>(agents: usize, cfg: &DdpgConfig, td3: Option<Td3Params>, rng: &mut R) -> Result<Self> {
        if agents == 0 {
            return Err(invalid("need at least one vehicle"));
        }
        if td3.is_some_and(|t| t.policy_delay == 0 || t.smoothing_std < 0.0 || t.smoothing_clip < 0.0) {
            return Err(invalid("td3 delay must be positive and smoothing non-negative"));
        }
        let (s, a) = (agents * VU_STATE_DIM, agents * VU_ACTION_DIM);
        let actor = MlpSpec::with_hidden(s, &cfg.actor_hidden, a, Activation::Sigmoid)?;
        let critic = MlpSpec::with_hidden(s + a, &cfg.critic_hidden, 1, Activation::Identity)?;
        let actor = Learner::new(actor, cfg.actor_lr, rng);
        let critics = (0..if td3.is_some() { 2 } else { 1 })
            .map(|_| Learner::new(critic.clone(), cfg.critic_lr, rng))
            .collect();
        Ok(Self {
            actor,
            critics,
            td3,
            discount: cfg.discount,
            tau: cfg.tau,
            clip: cfg.grad_clip,
            invert_gradients: cfg.invert_gradients,
            updates: 0,
        })
    }

    fn state_dim(&self) -> usize {
        self.actor.net.spec().input_dim()
    }

    /// Targets from the target actor (smoothed for TD3) and the minimum over target critics.
    pub fn targets<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Array1<f64>> {
        let next = match self.td3 {
            Some(t) => {
                let trace = self.actor.target.forward_trace(batch.next_states.view())?;
                trace.pre_output().mapv(|z| {
                    let eps = gaussian(rng, t.smoothing_std).clamp(-t.smoothing_clip, t.smoothing_clip);
                    sigmoid(z + eps)
                })
            }
            None => self.actor.target.forward_batch(batch.next_states.view())?,
        };
        let x = hcat(&[batch.next_states.view(), next.view()]);
        let mut q = self.critics[0].target.forward_batch(x.view())?.column(0).to_owned();
        for c in &self.critics[1..] {
            let other = c.target.forward_batch(x.view())?;
            q.zip_mut_with(&other.column(0), |a, b| *a = a.min(*b));
        }
        Ok(&batch.rewards_global + &(q * self.discount))
    }

    /// One learning step; returns the first critic's loss.
    pub fn learn<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<f64> {
        let y = self.targets(batch, rng)?;
        let x = hcat(&[batch.states.view(), batch.actions.view()]);
        let mut loss = 0.0;
        for (i, c) in self.critics.iter_mut().enumerate() {
            let l = c.regress(x.view(), y.view(), self.clip)?;
            if i == 0 {
                loss = l;
            }
        }
        self.updates += 1;
        let delay = self.td3.map_or(1, |t| t.policy_delay);
        if self.updates % delay == 0 {
            let trace = self.actor.net.forward_trace(batch.states.view())?;
            let xa = hcat(&[batch.states.view(), trace.output().view()]);
            let dx = critic_input_grad(&self.critics[0].net, xa.view(), -1.0)?;
            let mut da = cols(&dx, self.state_dim(), trace.output().ncols()).to_owned();
            if self.invert_gradients {
                invert_bounded_gradient(&mut da, trace.output().view(), 0.0, 1.0);
            }
            let (grads, _) = self.actor.net.backward_trace(&trace, da.view())?;
            self.actor.apply(grads, self.clip)?;
            self.actor.soft_update(self.tau)?;
            for c in &mut self.critics {
                c.soft_update(self.tau)?;
            }
        }
        Ok(loss)
    }

    pub fn all_finite(&self) -> bool {
        self.actor.net.is_finite() && self.critics.iter().all(|c| c.net.is_finite())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut nets: Vec<(String, &Mlp)> = vec![("actor".into(), &self.actor.net)];
        for (i, c) in self.critics.iter().enumerate() {
            nets.push((format!("critic{}", i + 1), &c.net));
        }
        let refs: Vec<(&str, &Mlp)> = nets.iter().map(|(n, m)| (n.as_str(), *m)).collect();
        Checkpoint::from_networks(&refs)
    }
}

#[derive(Debug, Clone)]
pub struct CentralizedTraining {
    pub agent: CentralizedAgent,
    pub episodes: Vec<PowerEpisode>,
}

/// Single-agent training with one learning step per slot once the buffer exceeds a batch.
pub fn train_centralized(
    env_cfg: &EnvConfig,
    phases: &PhaseSource,
    cfg: &DdpgConfig,
    td3: Option<Td3Params>,
    seed: u64,
) -> Result<CentralizedTraining> {
    cfg.validate()?;
    let k = env_cfg.num_vehicles();
    let mut env = VecEnv::new(env_cfg.clone(), seed, Domain::Train)?;
    let mut init_rng = stream_rng(seed, Domain::Train, Stream::Init);
    let mut explore_rng = stream_rng(seed, Domain::Train, Stream::Exploration);
    let mut replay_rng = stream_rng(seed, Domain::Train, Stream::Replay);
    let mut phase_rng = stream_rng(seed, Domain::Train, Stream::Phases);
    let mut agent = CentralizedAgent::new(k, cfg, td3, &mut init_rng)?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let (po, pl) = (env_cfg.max_offload_power, env_cfg.max_local_power);

    for episode in 0..cfg.episodes {
        env.reset();
        let noise_std = cfg.noise.std_at(episode);
        let mut acc = EpisodeAccumulator::new(k);
        for _ in 0..cfg.steps {
            let ris = phases.select(&env, &mut phase_rng)?;
            let state = env.joint_vu_state();
            let pre = agent.actor.net.forward_trace(Array2::from_shape_vec((1, state.len()), state.clone())
                .map_err(|e| invalid(e.to_string()))?
                .view())?
                .pre_output()
                .row(0)
                .to_vec();
            let u = squash_with_noise(&pre, noise_std, &mut explore_rng);
            let powers: Vec<_> = u.chunks(VU_ACTION_DIM).map(|c| to_power([c[0], c[1]], po, pl)).collect();
            let unit: Vec<f64> = powers.iter().flat_map(|p| [p.offload / po, p.local / pl]).collect();
            let out = env.step(ris.as_ref(), &powers)?;
            acc.record(&out);
            buffer.push(Transition {
                state,
                action: unit,
                reward_local: out.r_local.clone(),
                reward_global: out.r_global,
                next_state: env.joint_vu_state(),
            })?;
            if buffer.len() > cfg.batch_size {
                let batch = buffer.sample_batch(cfg.batch_size, &mut replay_rng)?;
                agent.learn(&batch, &mut explore_rng)?;
            }
        }
        episodes.push(acc.finish(episode));
    }
    Ok(CentralizedTraining { agent, episodes })
}

/// Trained artifacts of a baseline, if it learns anything.
#[derive(Debug, Clone)]
pub enum BaselineModel {
    Centralized(CentralizedAgent),
    MultiAgent(crate::power::Maddpg),
    Heuristic,
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub kind: BaselineKind,
    /// Training log (empty for heuristics).
    pub episodes: Vec<PowerEpisode>,
    pub model: BaselineModel,
    /// Greedy testing-stage rollout.
    pub test: Rollout,
}

/// Settings shared by every baseline run.
#[derive(Debug, Clone)]
pub struct BaselineSetup<'a> {
    pub env: &'a EnvConfig,
    pub power: &'a MaddpgConfig,
    pub td3: Td3Params,
    pub phase_actor: Option<&'a Mlp>,
    pub seed: u64,
    pub test_episodes: usize,
}

pub fn run_baseline(kind: BaselineKind, setup: &BaselineSetup<'_>) -> Result<BaselineRun> {
    let phases = match (kind, setup.phase_actor) {
        (BaselineKind::RandomPhase, _) => PhaseSource::Random,
        (BaselineKind::NoRis, _) => PhaseSource::NoRis,
        (_, Some(actor)) => PhaseSource::Trained(actor.clone()),
        (_, None) => return Err(Error::Config(format!("baseline {kind} needs a trained phase policy"))),
    };
    let cfg = &setup.power.ddpg;
    let (episodes, model, policy) = match kind {
        BaselineKind::CentralizedDdpg | BaselineKind::CentralizedTd3 => {
            let td3 = (kind == BaselineKind::CentralizedTd3).then_some(setup.td3);
            let run = train_centralized(setup.env, &phases, cfg, td3, setup.seed)?;
            let policy = PowerPolicy::Centralized(run.agent.actor.net.clone());
            (run.episodes, BaselineModel::Centralized(run.agent), policy)
        }
        BaselineKind::RandomPhase | BaselineKind::NoRis => {
            let run = train_power(setup.env, &phases, setup.power, setup.seed)?;
            let policy = PowerPolicy::Decentralized(run.model.actors());
            (run.episodes, BaselineModel::MultiAgent(run.model), policy)
        }
        BaselineKind::MaxPower => (Vec::new(), BaselineModel::Heuristic, PowerPolicy::MaxPower),
        BaselineKind::RandomPower => (Vec::new(), BaselineModel::Heuristic, PowerPolicy::RandomPower),
    };
    let test = rollout(setup.env, &phases, &policy, setup.seed, Domain::Eval, setup.test_episodes, cfg.steps, kind.name())?;
    Ok(BaselineRun { kind, episodes, model, test })
}
