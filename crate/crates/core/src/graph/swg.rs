//! Vertex update, transform network and the full sliding-window graph module.

use rand::Rng;

use super::aggregate::{AggregatorKind, NeighborTable};
use super::chunk::check_window;
use super::knn::{knn_graph, NeighborIndex};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, RunningStats, Var};
use crate::tensor::Tensor;

pub const DEFAULT_FFN_RATIO: usize = 4;

fn uniform_init<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let a = 1.0 / (fan_in as f64).sqrt();
    Tensor::uniform(shape, -a, a, rng)
}

/// `GeLU(BatchNorm(Linear([h || g])))`, the linear map taking `2t` to `t`.
#[derive(Clone, Debug)]
pub struct VertexUpdate {
    pub width: usize,
    pub weight: ParamId,
    pub bias: ParamId,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: RunningStats,
}

impl VertexUpdate {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, width: usize, rng: &mut R) -> Self {
        VertexUpdate {
            width,
            weight: store.add(format!("{prefix}.weight"), uniform_init(&[2 * width, width], 2 * width, rng)),
            bias: store.add(format!("{prefix}.bias"), Tensor::zeros(&[width])),
            gamma: store.add(format!("{prefix}.bn.gamma"), Tensor::ones(&[width])),
            beta: store.add(format!("{prefix}.bn.beta"), Tensor::zeros(&[width])),
            stats: RunningStats {
                mean: store.add_buffer(format!("{prefix}.bn.running_mean"), Tensor::zeros(&[width])),
                var: store.add_buffer(format!("{prefix}.bn.running_var"), Tensor::ones(&[width])),
            },
        }
    }

    /// `h` and `agg` share a shape whose last axis is the width; batch statistics run over all other axes.
    pub fn forward(&self, g: &Graph, store: &ParamStore, h: Var, agg: Var) -> Result<Var> {
        let shape = g.shape(h);
        if g.shape(agg) != shape || shape.last() != Some(&self.width) {
            return Err(Error::shape("vertex_update", format!("h {shape:?}, g {:?}, width {}", g.shape(agg), self.width)));
        }
        let rows = g.value(h).len() / self.width;
        let cat = g.concat_last(h, agg)?;
        let cat = g.reshape(cat, &[rows, 2 * self.width])?;
        let lin = g.matmul(cat, g.param(store, self.weight))?;
        let lin = g.add_bias(lin, g.param(store, self.bias))?;
        let bn = g.batch_norm(lin, 1, g.param(store, self.gamma), g.param(store, self.beta), self.stats, store)?;
        let out = g.gelu(bn);
        g.reshape(out, &shape)
    }
}

/// `Y = GeLU(G' W1) W2 + G'` over the last axis.
#[derive(Clone, Debug)]
pub struct TransformFfn {
    pub width: usize,
    pub ratio: usize,
    pub w1: ParamId,
    pub w2: ParamId,
}

impl TransformFfn {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, width: usize, ratio: usize, rng: &mut R) -> Self {
        let hidden = ratio * width;
        TransformFfn {
            width,
            ratio,
            w1: store.add(format!("{prefix}.w1"), uniform_init(&[width, hidden], width, rng)),
            w2: store.add(format!("{prefix}.w2"), uniform_init(&[hidden, width], hidden, rng)),
        }
    }

    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.last() != Some(&self.width) {
            return Err(Error::shape("transform_ffn", format!("{shape:?} for width {}", self.width)));
        }
        let rows = g.value(x).len() / self.width;
        let flat = g.reshape(x, &[rows, self.width])?;
        let hid = g.matmul(flat, g.param(store, self.w1))?;
        let hid = g.gelu(hid);
        let y = g.matmul(hid, g.param(store, self.w2))?;
        let y = g.add(y, flat)?;
        g.reshape(y, &shape)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwgConfig {
    /// Frames per chunk.
    pub window: usize,
    pub k: usize,
    pub aggregator: AggregatorKind,
    pub ffn_ratio: usize,
}

impl SwgConfig {
    pub fn new(window: usize, k: usize, aggregator: AggregatorKind) -> Self {
        SwgConfig { window, k, aggregator, ffn_ratio: DEFAULT_FFN_RATIO }
    }
}

#[derive(Clone, Debug)]
enum AggParams {
    Conv { weight: ParamId, bias: ParamId },
    Gin { eps: ParamId },
    None,
}

/// Sliding-window graph module: chunk time, build a KNN graph over the F x C
/// vertices of every chunk, aggregate, update and transform, then stitch the
/// chunks back together. Parameters are shared across chunks.
#[derive(Clone, Debug)]
pub struct SwgModule {
    pub cfg: SwgConfig,
    agg: AggParams,
    pub update: VertexUpdate,
    pub transform: TransformFfn,
}

impl SwgModule {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, cfg: SwgConfig, rng: &mut R) -> Result<Self> {
        if cfg.window == 0 || cfg.k == 0 || cfg.ffn_ratio == 0 {
            return Err(Error::InvalidArgument("window, k and ffn ratio must be positive".into()));
        }
        let agg = match cfg.aggregator {
            AggregatorKind::Conv2dAgg => AggParams::Conv {
                weight: store.add(format!("{prefix}.agg.weight"), Tensor::full(&[cfg.k], 1.0 / cfg.k as f64)),
                bias: store.add(format!("{prefix}.agg.bias"), Tensor::zeros(&[1])),
            },
            AggregatorKind::GinSum => AggParams::Gin { eps: store.add(format!("{prefix}.agg.eps"), Tensor::zeros(&[1])) },
            AggregatorKind::MaxRelative | AggregatorKind::SageMean => AggParams::None,
        };
        let update = VertexUpdate::new(store, &format!("{prefix}.update"), cfg.window, rng);
        let transform = TransformFfn::new(store, &format!("{prefix}.transform"), cfg.window, cfg.ffn_ratio, rng);
        Ok(SwgModule { cfg, agg, update, transform })
    }

    pub fn aggregate(&self, g: &Graph, store: &ParamStore, h: Var, nbrs: &NeighborTable) -> Result<Var> {
        match (&self.agg, self.cfg.aggregator) {
            (AggParams::Conv { weight, bias }, _) => {
                g.neighbor_conv(h, nbrs, g.param(store, *weight), g.param(store, *bias))
            }
            (AggParams::Gin { eps }, _) => g.neighbor_gin(h, nbrs, g.param(store, *eps)),
            (AggParams::None, AggregatorKind::MaxRelative) => g.neighbor_max_relative(h, nbrs),
            (AggParams::None, _) => g.neighbor_mean(h, nbrs),
        }
    }

    /// `x: [B, T, n]` with `n = F * C` vertices per frame; returns the same shape.
    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        self.forward_traced(g, store, x).map(|(y, _)| y)
    }

    /// Like [`forward`](Self::forward), also returning the neighbor table of every chunk
    /// (batch-major, then chunk order).
    pub fn forward_traced(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<(Var, Vec<NeighborIndex>)> {
        let shape = g.shape(x);
        if shape.len() != 3 {
            return Err(Error::shape("swg_module", format!("expected [B, T, n], got {shape:?}")));
        }
        let (b, frames, n) = (shape[0], shape[1], shape[2]);
        let t = self.cfg.window;
        let chunks = check_window(frames, t)?;
        if self.cfg.k >= n {
            return Err(Error::NeighborCount { k: self.cfg.k, n });
        }
        let m = b * chunks;
        let h = g.reshape(x, &[b, chunks, t, n])?;
        let h = g.permute(h, &[0, 1, 3, 2])?;
        let h = g.reshape(h, &[m, n, t])?;
        let graphs: Vec<NeighborIndex> = g.pinned(|| {
            let hv = g.value(h);
            hv.data().chunks_exact(n * t).map(|c| knn_graph(c, n, t, self.cfg.k)).collect::<Result<_>>()
        })?;
        let table = NeighborTable::new(&graphs)?;
        let agg = self.aggregate(g, store, h, &table)?;
        let upd = self.update.forward(g, store, h, agg)?;
        let y = self.transform.forward(g, store, upd)?;
        let y = g.reshape(y, &[b, chunks, n, t])?;
        let y = g.permute(y, &[0, 1, 3, 2])?;
        Ok((g.reshape(y, &[b, frames, n])?, graphs))
    }
}

/// Runs the module on a single `[T, F, C]` tensor.
pub fn swg_module_forward(g: &Graph, store: &ParamStore, module: &SwgModule, x: Var) -> Result<Var> {
    let s = g.shape(x);
    if s.len() != 3 {
        return Err(Error::shape("swg_module_forward", format!("expected [T, F, C], got {s:?}")));
    }
    let flat = g.reshape(x, &[1, s[0], s[1] * s[2]])?;
    let y = module.forward(g, store, flat)?;
    g.reshape(y, &s)
}
