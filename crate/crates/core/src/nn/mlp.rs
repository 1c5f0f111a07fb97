use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{ensure_len, invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    /// Bounded symmetric, `(-1, 1)`.
    Tanh,
    /// Bounded unit, `(0, 1)`.
    Sigmoid,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
        }
    }

    /// Multiplies `grad` in place by the derivative at pre-activation `z`.
    fn backprop(self, z: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Relu => Zip::from(grad).and(z).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(grad).and(z).for_each(|g, &z| {
                let t = z.tanh();
                *g *= 1.0 - t * t;
            }),
            Activation::Sigmoid => Zip::from(grad).and(z).for_each(|g, &z| {
                let s = sigmoid(z);
                *g *= s * (1.0 - s);
            }),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(invalid(format!("unknown activation {other:?}"))),
        }
    }
}

/// Layer widths from input to output. Hidden layers use ReLU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output_activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(invalid(format!("bad layer sizes {layer_sizes:?}")));
        }
        Ok(Self { layer_sizes, output_activation })
    }

    /// `input, hidden..., output` with the given output activation.
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize, act: Activation) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes, act)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 2 == self.layer_sizes.len() {
            self.output_activation
        } else {
            Activation::Relu
        }
    }
}

impl fmt::Display for MlpSpec {
    /// Compact form `5,64,64,2:sigmoid`, parsed back by `FromStr`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes: Vec<String> = self.layer_sizes.iter().map(usize::to_string).collect();
        write!(f, "{}:{}", sizes.join(","), self.output_activation.name())
    }
}

impl FromStr for MlpSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (sizes, act) = s.split_once(':').ok_or_else(|| invalid(format!("bad spec {s:?}")))?;
        let sizes = sizes
            .split(',')
            .map(|v| v.trim().parse::<usize>().map_err(|e| invalid(format!("bad layer size {v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        MlpSpec::new(sizes, act.parse()?)
    }
}

/// Affine layer, `y = x W + b` with `W` shaped `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

/// Per-layer inputs and pre-activations from a batched forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    /// Output-layer values before the output activation.
    pub fn pre_output(&self) -> &Array2<f64> {
        self.pre.last().expect("at least one layer")
    }
}

/// Gradients shaped exactly like an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self { layers: net.layers.iter().map(|l| Layer::zeros(l.weight.nrows(), l.weight.ncols())).collect() }
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.iter().chain(l.bias.iter()).map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm does not exceed `max_norm`. Returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for l in &mut self.layers {
                l.weight *= s;
                l.bias *= s;
            }
        }
        norm
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }
}

impl Mlp {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-bound..=bound));
                Layer { weight, bias: Array1::zeros(w[1]) }
            })
            .collect();
        Self { spec, layers }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let layers = spec.layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self { spec, layers }
    }

    /// Builds a network from explicit layers, checking them against `spec`.
    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        ensure_len(spec.layer_sizes.len() - 1, layers.len())?;
        for (w, l) in spec.layer_sizes.windows(2).zip(&layers) {
            ensure_len(w[0], l.weight.nrows())?;
            ensure_len(w[1], l.weight.ncols())?;
            ensure_len(w[1], l.bias.len())?;
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.spec.input_dim(), input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Batched forward pass, one sample per row.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        ensure_len(self.spec.input_dim(), x.ncols())?;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            self.spec.activation(i).apply(&mut z);
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that keeps what [`Mlp::backward_trace`] needs.
    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<Trace> {
        ensure_len(self.spec.input_dim(), x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight);
            z += &layer.bias;
            let mut a = z.clone();
            self.spec.activation(i).apply(&mut a);
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        Ok(Trace { inputs, pre, output: h })
    }

    /// Backpropagates `upstream = dL/d(output)` (batch rows) and returns the
    /// parameter gradients summed over the batch plus `dL/d(input)` per row.
    pub fn backward_trace(&self, trace: &Trace, upstream: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        ensure_len(self.spec.output_dim(), upstream.ncols())?;
        ensure_len(trace.output.nrows(), upstream.nrows())?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for i in (0..self.layers.len()).rev() {
            self.spec.activation(i).backprop(&trace.pre[i], &mut delta);
            let weight = trace.inputs[i].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            let next = delta.dot(&self.layers[i].weight.t());
            grads.push(Layer { weight, bias });
            delta = next;
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    /// Convenience wrapper: forward on `input` then backward with `upstream`.
    pub fn backward(&self, input: ArrayView2<f64>, upstream: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        let trace = self.forward_trace(input)?;
        self.backward_trace(&trace, upstream)
    }

    /// Iterates `(name, dims, values)` over every parameter tensor in a fixed order.
    pub fn named_tensors(&self) -> impl Iterator<Item = (String, Vec<usize>, Vec<f64>)> + '_ {
        self.layers.iter().enumerate().flat_map(|(i, l)| {
            [
                (format!("layer{i}.weight"), l.weight.shape().to_vec(), l.weight.iter().copied().collect()),
                (format!("layer{i}.bias"), vec![l.bias.len()], l.bias.to_vec()),
            ]
        })
    }

    /// Applies `f(param, other_param)` to every coordinate pair of two same-shaped networks.
    pub(crate) fn zip_params_mut(&mut self, other: &Mlp, mut f: impl FnMut(&mut f64, f64)) -> Result<()> {
        if self.spec != other.spec {
            return Err(invalid(format!("network shapes differ: {} vs {}", self.spec, other.spec)));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            Zip::from(&mut a.weight).and(&b.weight).for_each(|x, &y| f(x, y));
            Zip::from(&mut a.bias).and(&b.bias).for_each(|x, &y| f(x, y));
        }
        Ok(())
    }
}

/// `target <- tau * source + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut Mlp, source: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(invalid(format!("soft-update rate must be in [0, 1], got {tau}")));
    }
    target.zip_params_mut(source, |t, s| *t = tau * s + (1.0 - tau) * *t)
}

#[cfg(test)]
fn param_mut(m: &mut Mlp, layer: usize, p: usize) -> &mut f64 {
    let l = &mut m.layers[layer];
    let cols = l.weight.ncols();
    if p < l.weight.len() {
        &mut l.weight[[p / cols, p % cols]]
    } else {
        &mut l.bias[p - l.weight.len()]
    }
}

/// Largest relative gap between `grads` and central differences of `objective`
/// over every parameter of `net`.
#[cfg(test)]
pub(crate) fn max_finite_difference_error(net: &Mlp, grads: &Gradients, objective: impl Fn(&Mlp) -> f64, h: f64) -> f64 {
    let mut probe = net.clone();
    let mut analytic = Mlp { spec: net.spec.clone(), layers: grads.layers.clone() };
    let mut worst: f64 = 0.0;
    for li in 0..net.layers.len() {
        for p in 0..net.layers[li].weight.len() + net.layers[li].bias.len() {
            let orig = *param_mut(&mut probe, li, p);
            *param_mut(&mut probe, li, p) = orig + h;
            let up = objective(&probe);
            *param_mut(&mut probe, li, p) = orig - h;
            let down = objective(&probe);
            *param_mut(&mut probe, li, p) = orig;
            let numeric = (up - down) / (2.0 * h);
            let g = *param_mut(&mut analytic, li, p);
            worst = worst.max((numeric - g).abs() / numeric.abs().max(g.abs()).max(1e-6));
        }
    }
    worst
}
