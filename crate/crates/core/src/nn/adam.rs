use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Layer, Mlp};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected adaptive-moment optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl Adam {
    pub fn new(net: &Mlp, cfg: AdamConfig) -> Self {
        let zeros = Gradients::zeros_like(net).layers;
        Self { cfg, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.m.len() || net.layers().len() != self.m.len() {
            return Err(invalid("gradient and optimizer shapes differ"));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            if p.weight.shape() != g.weight.shape() || p.bias.len() != g.bias.len() {
                return Err(invalid("gradient shape does not match parameters"));
            }
            let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            };
            Zip::from(&mut p.weight).and(&g.weight).and(&mut m.weight).and(&mut v.weight).for_each(update);
            Zip::from(&mut p.bias).and(&g.bias).and(&mut m.bias).and(&mut v.bias).for_each(update);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpSpec};
    use crate::rng::{stream_rng, Domain, Stream};

    fn net() -> Mlp {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Identity).unwrap();
        Mlp::init(spec, &mut stream_rng(1, Domain::Train, Stream::Init))
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut n = net();
        let before = n.clone();
        let mut adam = Adam::new(&n, AdamConfig::with_lr(1e-3));
        adam.step(&mut n, &Gradients::zeros_like(&before)).unwrap();
        assert_eq!(n, before);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut n = net();
        let before = n.clone();
        let mut g = Gradients::zeros_like(&n);
        let mut r = stream_rng(2, Domain::Train, Stream::Init);
        for l in &mut g.layers {
            l.weight.mapv_inplace(|_| rand::Rng::random_range(&mut r, -2.0..2.0));
            l.bias.mapv_inplace(|_| rand::Rng::random_range(&mut r, -2.0..2.0));
        }
        let lr = 1e-3;
        let mut adam = Adam::new(&n, AdamConfig::with_lr(lr));
        adam.step(&mut n, &g).unwrap();
        for ((a, b), gl) in n.layers().iter().zip(before.layers()).zip(&g.layers) {
            for ((x, y), gv) in a.weight.iter().zip(b.weight.iter()).zip(gl.weight.iter()) {
                assert!(((x - y) + lr * gv.signum()).abs() < 1e-8);
            }
        }
        adam.step(&mut n, &g).unwrap();
        assert_eq!(adam.steps(), 2);
    }
}
