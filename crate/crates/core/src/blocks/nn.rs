//! Parameterized layers shared by the blocks.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, RunningStats, Var};
use crate::tensor::Tensor;

/// Uniform in `±1/sqrt(fan_in)`.
pub fn fan_in_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let a = 1.0 / (fan_in as f64).sqrt();
    Tensor::uniform(shape, -a, a, rng)
}

/// Affine map over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub d_in: usize,
    pub d_out: usize,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, bias: bool, rng: &mut R) -> Self {
        Linear {
            d_in,
            d_out,
            weight: store.add(format!("{name}.weight"), fan_in_uniform(&[d_in, d_out], d_in, rng)),
            bias: bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[d_out]))),
        }
    }

    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let mut shape = g.shape(x);
        if shape.last() != Some(&self.d_in) {
            return Err(Error::shape("linear", format!("input {shape:?} for {} -> {}", self.d_in, self.d_out)));
        }
        let rows = g.value(x).len() / self.d_in;
        let flat = g.reshape(x, &[rows, self.d_in])?;
        let mut y = g.matmul(flat, g.param(store, self.weight))?;
        if let Some(b) = self.bias {
            y = g.add_bias(y, g.param(store, b))?;
        }
        *shape.last_mut().unwrap() = self.d_out;
        g.reshape(y, &shape)
    }

    /// Sets weight and bias to zero.
    pub fn zero(&self, store: &mut ParamStore) {
        store.get_mut(self.weight).value = Tensor::zeros(&[self.d_in, self.d_out]);
        if let Some(b) = self.bias {
            store.get_mut(b).value = Tensor::zeros(&[self.d_out]);
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::ones(&[d])),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[d])),
        }
    }

    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        g.layer_norm(x, g.param(store, self.gamma), g.param(store, self.beta))
    }
}

/// Batch norm over channel axis 1 of an NCHW tensor.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: RunningStats,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: store.add(format!("{name}.gamma"), Tensor::ones(&[channels])),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels])),
            stats: RunningStats {
                mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels])),
                var: store.add_buffer(format!("{name}.running_var"), Tensor::ones(&[channels])),
            },
        }
    }

    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        g.batch_norm(x, 1, g.param(store, self.gamma), g.param(store, self.beta), self.stats, store)
    }
}

/// Bias-free 2D convolution with "same" padding for odd kernels.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub weight: ParamId,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, kernel: usize, rng: &mut R) -> Self {
        let fan_in = c_in * kernel * kernel;
        Conv2d {
            c_in,
            c_out,
            kernel,
            weight: store.add(format!("{name}.weight"), fan_in_uniform(&[c_out, c_in, kernel, kernel], fan_in, rng)),
        }
    }

    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let p = self.kernel / 2;
        g.conv2d(x, g.param(store, self.weight), (1, 1), (p, p))
    }
}

/// Sinusoidal absolute position table `[len, d]`: even features `sin`, odd `cos`.
pub fn sinusoidal_encoding(len: usize, d: usize) -> Tensor {
    Tensor::from_fn(&[len, d], |i| {
        let (pos, j) = ((i / d) as f64, i % d);
        let freq = 10_000f64.powf(-((j - j % 2) as f64) / d as f64);
        if j % 2 == 0 {
            (pos * freq).sin()
        } else {
            (pos * freq).cos()
        }
    })
}
