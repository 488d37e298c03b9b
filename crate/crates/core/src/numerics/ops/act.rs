use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::numerics::graph::{Graph, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// Exact form `0.5 x (1 + erf(x / sqrt 2))`.
    Gelu,
    /// `x * sigmoid(x)`.
    Swish,
    Tanh,
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu(x),
            Activation::Swish => swish(x),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Gelu => gelu_grad(x),
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

impl Graph {
    pub fn activation(&self, x: Var, kind: Activation) -> Var {
        let out = self.value(x).map(|v| kind.apply(v));
        self.push_op(out, &[x], move |c| {
            let mut d = c.grad.clone();
            for ((g, &xi), &yi) in d.data_mut().iter_mut().zip(c.inputs[0].data()).zip(c.output.data()) {
                *g *= kind.derivative(xi, yi);
            }
            vec![Some(d)]
        })
    }

    pub fn gelu(&self, x: Var) -> Var {
        self.activation(x, Activation::Gelu)
    }

    pub fn swish(&self, x: Var) -> Var {
        self.activation(x, Activation::Swish)
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }
}
