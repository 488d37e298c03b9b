//! Layer norm, batch norm and softmax.

use crate::error::{Error, Result};
use crate::numerics::graph::{Graph, Var};
use crate::numerics::param::{BufferId, ParamStore};
use crate::tensor::{split_axis, Tensor};

pub const NORM_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running statistics owned by a batch-norm layer.
#[derive(Clone, Copy, Debug)]
pub struct RunningStats {
    pub mean: BufferId,
    pub var: BufferId,
}

/// Per-channel statistics and normalized values for `x` viewed as `[outer, c, inner]`.
struct Normalized {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

fn normalize_channels(x: &[f64], outer: usize, c: usize, inner: usize, mean: &[f64], var: &[f64]) -> Normalized {
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + NORM_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    for o in 0..outer {
        for ch in 0..c {
            let base = (o * c + ch) * inner;
            for i in base..base + inner {
                xhat[i] = (x[i] - mean[ch]) * inv_std[ch];
            }
        }
    }
    Normalized { xhat, inv_std }
}

impl Graph {
    /// Normalizes over the last axis, then applies per-feature `gamma`/`beta`.
    pub fn layer_norm(&self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xs = self.shape(x);
        let d = *xs.last().unwrap();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::shape("layer_norm", format!("affine params for feature size {d}")));
        }
        let rows = self.value(x).len() / d;
        let mut xhat = vec![0.0; rows * d];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * d];
        {
            let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
            for r in 0..rows {
                let row = &xv.data()[r * d..(r + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let is = 1.0 / (var + NORM_EPS).sqrt();
                inv_std[r] = is;
                for j in 0..d {
                    let h = (row[j] - mean) * is;
                    xhat[r * d + j] = h;
                    out[r * d + j] = gv.data()[j] * h + bv.data()[j];
                }
            }
        }
        let out = Tensor::from_parts(xs, out);
        Ok(self.push_op(out, &[x, gamma, beta], move |c| {
            let g = c.grad.data();
            let gamma = c.inputs[1].data();
            let mut dgamma = vec![0.0; d];
            let mut dbeta = vec![0.0; d];
            let mut dx = vec![0.0; rows * d];
            for r in 0..rows {
                let gr = &g[r * d..(r + 1) * d];
                let hr = &xhat[r * d..(r + 1) * d];
                let mut mean_dh = 0.0;
                let mut mean_dh_h = 0.0;
                for j in 0..d {
                    dgamma[j] += gr[j] * hr[j];
                    dbeta[j] += gr[j];
                    let dh = gr[j] * gamma[j];
                    mean_dh += dh;
                    mean_dh_h += dh * hr[j];
                }
                mean_dh /= d as f64;
                mean_dh_h /= d as f64;
                for j in 0..d {
                    let dh = gr[j] * gamma[j];
                    dx[r * d + j] = inv_std[r] * (dh - mean_dh - hr[j] * mean_dh_h);
                }
            }
            vec![
                Some(Tensor::from_parts(c.inputs[0].shape().to_vec(), dx)),
                Some(Tensor::from_parts(vec![d], dgamma)),
                Some(Tensor::from_parts(vec![d], dbeta)),
            ]
        }))
    }

    /// Batch normalization with channels on `axis` and statistics over every other axis.
    ///
    /// Training mode normalizes with batch statistics and queues a running-stat
    /// update (momentum [`BN_MOMENTUM`], unbiased variance); evaluation mode uses
    /// the stored running statistics.
    pub fn batch_norm(
        &self,
        x: Var,
        axis: usize,
        gamma: Var,
        beta: Var,
        stats: RunningStats,
        store: &ParamStore,
    ) -> Result<Var> {
        let xs = self.shape(x);
        if axis >= xs.len() {
            return Err(Error::shape("batch_norm", format!("axis {axis} for {xs:?}")));
        }
        let (outer, c, inner) = split_axis(&xs, axis);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("batch_norm", format!("affine params for {c} channels")));
        }
        let m = outer * inner;
        let training = self.training();
        let (mean, var) = if training {
            let xv = self.value(x);
            let xd = xv.data();
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for o in 0..outer {
                for ch in 0..c {
                    let base = (o * c + ch) * inner;
                    mean[ch] += xd[base..base + inner].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|v| *v /= m as f64);
            for o in 0..outer {
                for ch in 0..c {
                    let base = (o * c + ch) * inner;
                    var[ch] += xd[base..base + inner].iter().map(|v| (v - mean[ch]) * (v - mean[ch])).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= m as f64);
            let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
            let rm = store.buffer(stats.mean).zip_map(&Tensor::from_parts(vec![c], mean.clone()), |r, b| {
                (1.0 - BN_MOMENTUM) * r + BN_MOMENTUM * b
            });
            let rv = store.buffer(stats.var).zip_map(&Tensor::from_parts(vec![c], var.clone()), |r, b| {
                (1.0 - BN_MOMENTUM) * r + BN_MOMENTUM * b * unbias
            });
            self.queue_buffer_update(stats.mean, rm);
            self.queue_buffer_update(stats.var, rv);
            (mean, var)
        } else {
            (store.buffer(stats.mean).data().to_vec(), store.buffer(stats.var).data().to_vec())
        };
        let norm = normalize_channels(self.value(x).data(), outer, c, inner, &mean, &var);
        let mut out = norm.xhat.clone();
        {
            let (gv, bv) = (self.value(gamma), self.value(beta));
            for o in 0..outer {
                for ch in 0..c {
                    let base = (o * c + ch) * inner;
                    let (gm, bt) = (gv.data()[ch], bv.data()[ch]);
                    out[base..base + inner].iter_mut().for_each(|v| *v = gm * *v + bt);
                }
            }
        }
        let Normalized { xhat, inv_std } = norm;
        let out = Tensor::from_parts(xs, out);
        Ok(self.push_op(out, &[x, gamma, beta], move |ctx| {
            let g = ctx.grad.data();
            let gamma = ctx.inputs[1].data();
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            for o in 0..outer {
                for ch in 0..c {
                    let base = (o * c + ch) * inner;
                    for i in base..base + inner {
                        dgamma[ch] += g[i] * xhat[i];
                        dbeta[ch] += g[i];
                    }
                }
            }
            let dx = ctx.needs[0].then(|| {
                let mut dx = vec![0.0; g.len()];
                for o in 0..outer {
                    for ch in 0..c {
                        let base = (o * c + ch) * inner;
                        let k = gamma[ch] * inv_std[ch];
                        if training {
                            let mean_dy = dbeta[ch] / m as f64;
                            let mean_dy_h = dgamma[ch] / m as f64;
                            for i in base..base + inner {
                                dx[i] = k * (g[i] - mean_dy - xhat[i] * mean_dy_h);
                            }
                        } else {
                            for i in base..base + inner {
                                dx[i] = k * g[i];
                            }
                        }
                    }
                }
                Tensor::from_parts(ctx.inputs[0].shape().to_vec(), dx)
            });
            vec![dx, Some(Tensor::from_parts(vec![c], dgamma)), Some(Tensor::from_parts(vec![c], dbeta))]
        }))
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&self, x: Var, axis: usize) -> Result<Var> {
        let xs = self.shape(x);
        if axis >= xs.len() {
            return Err(Error::shape("softmax", format!("axis {axis} for {xs:?}")));
        }
        let (outer, n, inner) = split_axis(&xs, axis);
        let mut out = self.value(x).clone();
        {
            let d = out.data_mut();
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| (o * n + j) * inner + i;
                    let max = (0..n).map(|j| d[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for j in 0..n {
                        let e = (d[at(j)] - max).exp();
                        d[at(j)] = e;
                        z += e;
                    }
                    for j in 0..n {
                        d[at(j)] /= z;
                    }
                }
            }
        }
        Ok(self.push_op(out, &[x], move |c| {
            let (y, g) = (c.output.data(), c.grad.data());
            let mut dx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| (o * n + j) * inner + i;
                    let dot: f64 = (0..n).map(|j| g[at(j)] * y[at(j)]).sum();
                    for j in 0..n {
                        dx[at(j)] = y[at(j)] * (g[at(j)] - dot);
                    }
                }
            }
            vec![Some(Tensor::from_parts(c.inputs[0].shape().to_vec(), dx))]
        }))
    }

    /// Inverted dropout; identity in evaluation mode or at rate 0.
    pub fn dropout(&self, x: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !self.training() || rate == 0.0 {
            return Ok(x);
        }
        use rand::Rng;
        let n = self.value(x).len();
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = {
            let mut rng = self.rng();
            (0..n).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect()
        };
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        Ok(self.push_op(out, &[x], move |c| {
            let mut d = c.grad.clone();
            d.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            vec![Some(d)]
        }))
    }
}
