//! Neighbor aggregation as differentiable graph operations.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::knn::NeighborIndex;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggregatorKind {
    /// One learned weight per neighbor rank plus a bias (a 1 x k convolution).
    Conv2dAgg,
    MaxRelative,
    SageMean,
    GinSum,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 4] =
        [AggregatorKind::Conv2dAgg, AggregatorKind::MaxRelative, AggregatorKind::SageMean, AggregatorKind::GinSum];

    pub fn name(self) -> &'static str {
        match self {
            AggregatorKind::Conv2dAgg => "conv2d_agg",
            AggregatorKind::MaxRelative => "max_relative",
            AggregatorKind::SageMean => "sage_mean",
            AggregatorKind::GinSum => "gin_sum",
        }
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AggregatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown aggregator '{s}' (expected one of conv2d_agg, max_relative, sage_mean, gin_sum)")))
    }
}

/// Neighbor lists for a batch of `m` graphs with `n` vertices each, flattened `[m, n, k]`.
#[derive(Clone, Debug)]
pub struct NeighborTable {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    ids: Arc<[usize]>,
}

impl NeighborTable {
    pub fn new(graphs: &[NeighborIndex]) -> Result<Self> {
        let first = graphs.first().ok_or_else(|| Error::InvalidArgument("empty neighbor table".into()))?;
        let (n, k) = (first.n, first.k);
        if graphs.iter().any(|g| g.n != n || g.k != k) {
            return Err(Error::shape("NeighborTable", "graphs differ in n or k"));
        }
        let ids: Vec<usize> = graphs.iter().flat_map(|g| g.indices().iter().copied()).collect();
        Ok(NeighborTable { m: graphs.len(), n, k, ids: ids.into() })
    }

    pub fn single(graph: &NeighborIndex) -> Self {
        NeighborTable::new(std::slice::from_ref(graph)).expect("one graph")
    }

    /// Global row index (into `[m * n]`) of neighbor `j` of vertex `i` in graph `g`.
    #[inline]
    fn at(&self, g: usize, i: usize, j: usize) -> usize {
        g * self.n + self.ids[(g * self.n + i) * self.k + j]
    }

    fn check(&self, op: &'static str, shape: &[usize]) -> Result<usize> {
        if shape.len() != 3 || shape[0] != self.m || shape[1] != self.n {
            return Err(Error::shape(op, format!("features {shape:?} vs neighbor table [{}, {}, {}]", self.m, self.n, self.k)));
        }
        Ok(shape[2])
    }
}

impl Graph {
    /// `out[g, i, :] = sum_j w[j] * h[g, N_j(i), :] + b` with `w: [k]`, `b: [1]`.
    pub fn neighbor_conv(&self, h: Var, nbrs: &NeighborTable, w: Var, b: Var) -> Result<Var> {
        let t = nbrs.check("neighbor_conv", &self.shape(h))?;
        if self.shape(w) != [nbrs.k] || self.value(b).len() != 1 {
            return Err(Error::shape("neighbor_conv", format!("weights {:?} for k = {}", self.shape(w), nbrs.k)));
        }
        let (m, n, k) = (nbrs.m, nbrs.n, nbrs.k);
        let mut out = vec![self.value(b).item(); m * n * t];
        {
            let (hv, wv) = (self.value(h), self.value(w));
            let (hd, wd) = (hv.data(), wv.data());
            for g in 0..m {
                for i in 0..n {
                    let o = &mut out[(g * n + i) * t..(g * n + i + 1) * t];
                    for (j, &wj) in wd.iter().enumerate() {
                        let src = nbrs.at(g, i, j) * t;
                        for (ov, hv) in o.iter_mut().zip(&hd[src..src + t]) {
                            *ov += wj * hv;
                        }
                    }
                }
            }
        }
        let nb = nbrs.clone();
        let out = Tensor::new(vec![m, n, t], out)?;
        Ok(self.push_op(out, &[h, w, b], move |c| {
            let (gd, hd, wd) = (c.grad.data(), c.inputs[0].data(), c.inputs[1].data());
            let mut dh = vec![0.0; hd.len()];
            let mut dw = vec![0.0; k];
            for g in 0..m {
                for i in 0..n {
                    let go = &gd[(g * n + i) * t..(g * n + i + 1) * t];
                    for j in 0..k {
                        let src = nb.at(g, i, j) * t;
                        let mut acc = 0.0;
                        for tau in 0..t {
                            acc += go[tau] * hd[src + tau];
                            dh[src + tau] += wd[j] * go[tau];
                        }
                        dw[j] += acc;
                    }
                }
            }
            let db: f64 = gd.iter().sum();
            vec![
                Some(Tensor::from_parts(vec![m, n, t], dh)),
                Some(Tensor::from_parts(vec![k], dw)),
                Some(Tensor::from_parts(c.inputs[2].shape().to_vec(), vec![db])),
            ]
        }))
    }

    /// `out[g, i, :] = max_j (h[g, N_j(i), :] - h[g, i, :])`; gradient goes to the first maximizer.
    pub fn neighbor_max_relative(&self, h: Var, nbrs: &NeighborTable) -> Result<Var> {
        let t = nbrs.check("neighbor_max_relative", &self.shape(h))?;
        let (m, n, k) = (nbrs.m, nbrs.n, nbrs.k);
        let mut out = vec![0.0; m * n * t];
        let mut arg = vec![0usize; m * n * t];
        {
            let hv = self.value(h);
            let hd = hv.data();
            for g in 0..m {
                for i in 0..n {
                    let row = (g * n + i) * t;
                    for tau in 0..t {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_row = 0;
                        for j in 0..k {
                            let src = nbrs.at(g, i, j);
                            let v = hd[src * t + tau] - hd[row + tau];
                            if v > best {
                                best = v;
                                best_row = src;
                            }
                        }
                        out[row + tau] = best;
                        arg[row + tau] = best_row;
                    }
                }
            }
        }
        let out = Tensor::new(vec![m, n, t], out)?;
        Ok(self.push_op(out, &[h], move |c| {
            let gd = c.grad.data();
            let mut dh = vec![0.0; gd.len()];
            for (e, (&gv, &src)) in gd.iter().zip(&arg).enumerate() {
                let tau = e % t;
                dh[src * t + tau] += gv;
                dh[e] -= gv;
            }
            vec![Some(Tensor::from_parts(vec![m, n, t], dh))]
        }))
    }

    /// `out[g, i, :] = scale * sum_j h[g, N_j(i), :]`.
    fn neighbor_sum_scaled(&self, h: Var, nbrs: &NeighborTable, scale: f64, op: &'static str) -> Result<Var> {
        let t = nbrs.check(op, &self.shape(h))?;
        let (m, n, k) = (nbrs.m, nbrs.n, nbrs.k);
        let mut out = vec![0.0; m * n * t];
        {
            let hv = self.value(h);
            let hd = hv.data();
            for g in 0..m {
                for i in 0..n {
                    let o = &mut out[(g * n + i) * t..(g * n + i + 1) * t];
                    for j in 0..k {
                        let src = nbrs.at(g, i, j) * t;
                        for (ov, hv) in o.iter_mut().zip(&hd[src..src + t]) {
                            *ov += hv;
                        }
                    }
                    o.iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
        let nb = nbrs.clone();
        let out = Tensor::new(vec![m, n, t], out)?;
        Ok(self.push_op(out, &[h], move |c| {
            let gd = c.grad.data();
            let mut dh = vec![0.0; gd.len()];
            for g in 0..m {
                for i in 0..n {
                    let go = &gd[(g * n + i) * t..(g * n + i + 1) * t];
                    for j in 0..k {
                        let src = nb.at(g, i, j) * t;
                        for tau in 0..t {
                            dh[src + tau] += scale * go[tau];
                        }
                    }
                }
            }
            vec![Some(Tensor::from_parts(vec![m, n, t], dh))]
        }))
    }

    pub fn neighbor_mean(&self, h: Var, nbrs: &NeighborTable) -> Result<Var> {
        self.neighbor_sum_scaled(h, nbrs, 1.0 / nbrs.k as f64, "neighbor_mean")
    }

    /// `(1 + eps) * h_i + sum_j h_j` with a learnable scalar `eps`.
    pub fn neighbor_gin(&self, h: Var, nbrs: &NeighborTable, eps: Var) -> Result<Var> {
        let sum = self.neighbor_sum_scaled(h, nbrs, 1.0, "neighbor_gin")?;
        let scaled = self.mul_scalar(h, eps)?;
        let with_self = self.add(h, scaled)?;
        self.add(with_self, sum)
    }

    /// Copies neighbor features into `[m, t, n, k]` so a `1 x k` convolution can aggregate them.
    pub fn gather_neighbors(&self, h: Var, nbrs: &NeighborTable) -> Result<Var> {
        let t = nbrs.check("gather_neighbors", &self.shape(h))?;
        let (m, n, k) = (nbrs.m, nbrs.n, nbrs.k);
        let mut out = vec![0.0; m * t * n * k];
        {
            let hv = self.value(h);
            let hd = hv.data();
            for g in 0..m {
                for i in 0..n {
                    for j in 0..k {
                        let src = nbrs.at(g, i, j) * t;
                        for tau in 0..t {
                            out[((g * t + tau) * n + i) * k + j] = hd[src + tau];
                        }
                    }
                }
            }
        }
        let nb = nbrs.clone();
        let out = Tensor::new(vec![m, t, n, k], out)?;
        Ok(self.push_op(out, &[h], move |c| {
            let gd = c.grad.data();
            let mut dh = vec![0.0; m * n * t];
            for g in 0..m {
                for i in 0..n {
                    for j in 0..k {
                        let src = nb.at(g, i, j) * t;
                        for tau in 0..t {
                            dh[src + tau] += gd[((g * t + tau) * n + i) * k + j];
                        }
                    }
                }
            }
            vec![Some(Tensor::from_parts(vec![m, n, t], dh))]
        }))
    }
}
