//! Online/target network pairs and the regression and policy-gradient steps
//! shared by every actor-critic learner in the crate.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Result};
use crate::nn::{soft_update, Adam, AdamConfig, Gradients, Mlp, MlpSpec};

/// Exploration noise standard deviation, decayed geometrically per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSchedule {
    pub initial: f64,
    pub decay: f64,
    pub floor: f64,
}

impl NoiseSchedule {
    pub fn std_at(&self, episode: usize) -> f64 {
        (self.initial * self.decay.powi(episode as i32)).max(self.floor)
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self { initial: 0.3, decay: 0.999, floor: 0.01 }
    }
}

/// Hyper-parameters shared by the single-agent and multi-agent trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub discount: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub episodes: usize,
    pub steps: usize,
    pub replay_capacity: usize,
    pub noise: NoiseSchedule,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Global-norm gradient clip applied before every optimizer step.
    pub grad_clip: f64,
    /// Scale action gradients by the room left toward the bound they push to.
    pub invert_gradients: bool,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            discount: 0.99,
            tau: 0.005,
            batch_size: 64,
            episodes: 1000,
            steps: 100,
            replay_capacity: 1_000_000,
            noise: NoiseSchedule::default(),
            actor_hidden: vec![512, 256],
            critic_hidden: vec![1024, 512, 256],
            grad_clip: 1.0,
            invert_gradients: true,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0 && self.tau > 0.0 && self.tau <= 1.0) {
            return Err(invalid("discount and tau must lie in (0, 1]"));
        }
        if self.batch_size == 0 || self.steps == 0 || self.replay_capacity <= self.batch_size {
            return Err(invalid("batch size and steps must be positive and capacity must exceed the batch"));
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err(invalid("hidden layer widths must be positive"));
        }
        let n = self.noise;
        if !(n.initial >= 0.0 && n.floor >= 0.0 && n.decay > 0.0 && n.decay <= 1.0) {
            return Err(invalid("noise schedule must be non-negative with decay in (0, 1]"));
        }
        if !(self.grad_clip > 0.0) {
            return Err(invalid("gradient clip must be positive"));
        }
        Ok(())
    }
}

/// An online network, its slowly tracking target copy and its optimizer.
#[derive(Debug, Clone)]
pub struct Learner {
    pub net: Mlp,
    pub target: Mlp,
    pub opt: Adam,
}

impl Learner {
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, lr: f64, rng: &mut R) -> Self {
        let net = Mlp::init(spec, rng);
        Self::from_net(net, lr)
    }

    pub fn from_net(net: Mlp, lr: f64) -> Self {
        let opt = Adam::new(&net, AdamConfig::with_lr(lr));
        Self { target: net.clone(), net, opt }
    }

    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        soft_update(&mut self.target, &self.net, tau)
    }

    pub fn apply(&mut self, mut grads: Gradients, clip: f64) -> Result<()> {
        grads.clip_global_norm(clip);
        self.opt.step(&mut self.net, &grads)
    }

    /// One step on mean squared error between `net(inputs)` and `targets`.
    /// Returns the loss measured before the step.
    pub fn regress(&mut self, inputs: ArrayView2<f64>, targets: ArrayView1<f64>, clip: f64) -> Result<f64> {
        ensure_len(inputs.nrows(), targets.len())?;
        let trace = self.net.forward_trace(inputs)?;
        let q = trace.output().column(0);
        let n = targets.len() as f64;
        let err: Array1<f64> = &q - &targets;
        let loss = err.mapv(|e| e * e).sum() / n;
        let upstream = (err * (2.0 / n)).insert_axis(Axis(1));
        let (grads, _) = self.net.backward_trace(&trace, upstream.view())?;
        self.apply(grads, clip)?;
        Ok(loss)
    }
}

pub fn hcat(parts: &[ArrayView2<f64>]) -> Array2<f64> {
    concatenate(Axis(1), parts).expect("row counts agree")
}

/// `d(mean Q)/d(input)` for every row, scaled by `scale` (use `-1` for ascent).
/// Rescales a loss gradient `da` over actions `a` in `[lo, hi]`: components
/// that would raise an action shrink by `(hi - a) / (hi - lo)`, those that
/// would lower it by `(a - lo) / (hi - lo)`.
pub fn invert_bounded_gradient(da: &mut Array2<f64>, a: ArrayView2<f64>, lo: f64, hi: f64) {
    let width = hi - lo;
    ndarray::Zip::from(da).and(a).for_each(|g, &x| {
        *g *= if *g < 0.0 { (hi - x) / width } else { (x - lo) / width };
    });
}

pub fn critic_input_grad(critic: &Mlp, inputs: ArrayView2<f64>, scale: f64) -> Result<Array2<f64>> {
    let n = inputs.nrows() as f64;
    let upstream = Array2::from_elem((inputs.nrows(), 1), scale / n);
    let (_, dx) = critic.backward(inputs, upstream.view())?;
    Ok(dx)
}

/// Columns `[start, start + len)` of `m`.
pub fn cols(m: &Array2<f64>, start: usize, len: usize) -> ArrayView2<'_, f64> {
    m.slice(s![.., start..start + len])
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    }
}
