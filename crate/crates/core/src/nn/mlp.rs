use rand::Rng;
use serde::{Deserialize, Serialize};

use super::array::{axpy, dot};
use super::params::{join, Parameters};
use super::Array;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected layer, `y = W x + b` with `W` stored `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array,
    pub bias: Array,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array::zeros(&[output, input]),
            bias: Array::zeros(&[output]),
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let mut layer = Self::zeros(input, output);
        for w in layer.weight.data_mut() {
            *w = rng.random_range(-limit..limit);
        }
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn forward(&self, x: &Array) -> Array {
        let (n, out) = (x.rows(), self.output_dim());
        let mut y = Array::zeros(&[n, out]);
        let bias = self.bias.data();
        for r in 0..n {
            let xr = x.row(r);
            let yr = y.row_mut(r);
            for (o, yo) in yr.iter_mut().enumerate() {
                *yo = bias[o] + dot(self.weight.row(o), xr);
            }
        }
        y
    }
}

/// Multilayer perceptron with a shared hidden activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Per-layer inputs and pre-activations recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array>,
    preacts: Vec<Array>,
}

impl MlpCache {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |a| a.rows())
    }
}

impl Mlp {
    /// `sizes = [in, hidden.., out]`; ReLU on hidden layers, identity output.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("bad layer sizes {sizes:?}")));
        }
        Ok(Self {
            layers: sizes
                .windows(2)
                .map(|w| Linear::glorot(w[0], w[1], rng))
                .collect(),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
        })
    }

    pub fn from_layers(layers: Vec<Linear>, hidden: Activation, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].output_dim(),
                    actual: pair[1].input_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(Error::DimensionMismatch {
                    expected: l.output_dim(),
                    actual: l.bias.len(),
                });
            }
        }
        Ok(Self {
            layers,
            hidden_activation: hidden,
            output_activation: output,
        })
    }

    /// Layers whose weights copy the input into the leading output
    /// coordinates (zero padding or truncation), all activations identity.
    pub fn identity(sizes: &[usize]) -> Result<Self> {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let mut l = Linear::zeros(w[0], w[1]);
                for i in 0..w[0].min(w[1]) {
                    l.weight.row_mut(i)[i] = 1.0;
                }
                l
            })
            .collect();
        Self::from_layers(layers, Activation::Identity, Activation::Identity)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero_all();
        z
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_dim())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.output_dim()));
        s
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn check_input(&self, x: &Array) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.cols(),
            });
        }
        Ok(())
    }

    /// Forward pass over a batch `[n, in]`, keeping what backward needs.
    pub fn forward(&self, x: &Array) -> Result<(Array, MlpCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = layer.forward(&cur);
            let act = self.activation(i);
            let mut out = pre.clone();
            out.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            inputs.push(cur);
            preacts.push(pre);
            cur = out;
        }
        Ok((cur, MlpCache { inputs, preacts }))
    }

    /// Forward pass without a cache.
    pub fn infer(&self, x: &Array) -> Result<Array> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            cur = layer.forward(&cur);
            cur.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
        }
        Ok(cur)
    }

    /// Reverse pass; parameter gradients are added into `grads`.
    pub fn backward_into(&self, cache: &MlpCache, output_grad: &Array, grads: &mut Mlp) -> Result<Array> {
        if cache.inputs.len() != self.layers.len() || grads.layers.len() != self.layers.len() {
            return Err(Error::Shape("cache or gradient buffer does not match this MLP".into()));
        }
        for (l, (inp, pre)) in self.layers.iter().zip(cache.inputs.iter().zip(&cache.preacts)) {
            if inp.cols() != l.input_dim() || pre.cols() != l.output_dim() {
                return Err(Error::Shape("stale MLP cache".into()));
            }
        }
        if output_grad.shape() != cache.preacts.last().map(|a| a.shape()).unwrap_or(&[]) {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match cached output",
                output_grad.shape()
            )));
        }

        let mut grad = output_grad.clone();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let act = self.activation(i);
            let pre = &cache.preacts[i];
            let input = &cache.inputs[i];
            for (g, p) in grad.data_mut().iter_mut().zip(pre.data()) {
                *g *= act.derivative(*p);
            }
            let gl = &mut grads.layers[i];
            let mut input_grad = Array::zeros(&[input.rows(), layer.input_dim()]);
            for r in 0..input.rows() {
                let gr = grad.row(r);
                let xr = input.row(r);
                let dxr = input_grad.row_mut(r);
                for (o, &g) in gr.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    axpy(g, layer.weight.row(o), dxr);
                    axpy(g, xr, gl.weight.row_mut(o));
                    gl.bias.data_mut()[o] += g;
                }
            }
            grad = input_grad;
        }
        Ok(grad)
    }

    /// Reverse pass returning `(input_grad, param_grads)`.
    pub fn backward(&self, cache: &MlpCache, output_grad: &Array) -> Result<(Array, Mlp)> {
        let mut grads = self.zeros_like();
        let dx = self.backward_into(cache, output_grad, &mut grads)?;
        Ok((dx, grads))
    }
}

impl Parameters for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Array)) {
        for (i, l) in self.layers.iter().enumerate() {
            f(&join(prefix, &format!("layer{i}.weight")), &l.weight);
            f(&join(prefix, &format!("layer{i}.bias")), &l.bias);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Array)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(&join(prefix, &format!("layer{i}.weight")), &mut l.weight);
            f(&join(prefix, &format!("layer{i}.bias")), &mut l.bias);
        }
    }
}
