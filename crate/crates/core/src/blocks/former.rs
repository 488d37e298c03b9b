use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::ff::{FeedForward, DEFAULT_FF_RATIO};
use super::mhsa::{MultiHeadAttention, DEFAULT_HEADS};
use super::nn::LayerNorm;
use crate::error::{Error, Result};
use crate::graph::{AggregatorKind, SwgConfig, SwgModule, DEFAULT_FFN_RATIO};
use crate::numerics::{Graph, ParamStore, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BlockModule {
    FeedForward,
    Attention,
    Graph,
}

impl BlockModule {
    pub fn name(self) -> &'static str {
        match self {
            BlockModule::FeedForward => "FF",
            BlockModule::Attention => "MHSA",
            BlockModule::Graph => "SwG",
        }
    }
}

impl fmt::Display for BlockModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

use BlockModule::{Attention as A, FeedForward as F, Graph as G};

/// The four module orders compared in the connection-order ablation.
pub const MODULE_ORDERS: [[BlockModule; 4]; 4] = [[F, A, G, F], [F, G, A, F], [F, A, F, G], [A, F, G, F]];

pub fn format_order(order: &[BlockModule]) -> String {
    order.iter().map(|m| m.name()).collect::<Vec<_>>().join(",")
}

/// Parses a comma-separated order such as `FF,MHSA,SwG,FF`.
pub fn parse_order(s: &str) -> Result<Vec<BlockModule>> {
    s.split(',')
        .map(|p| match p.trim() {
            "FF" => Ok(F),
            "MHSA" => Ok(A),
            "SwG" => Ok(G),
            other => Err(Error::InvalidArgument(format!("unknown block module '{other}' (expected FF, MHSA or SwG)"))),
        })
        .collect()
}

impl FromStr for BlockModule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = parse_order(s)?;
        match v.as_slice() {
            [m] => Ok(*m),
            _ => Err(Error::InvalidArgument(format!("expected a single module, got '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwgBlockConfig {
    pub window: usize,
    pub k: usize,
    pub aggregator: AggregatorKind,
    pub d_model: usize,
    pub n_heads: usize,
    pub ff_ratio: usize,
    pub graph_ffn_ratio: usize,
    pub dropout: f64,
    pub module_order: Vec<BlockModule>,
}

impl SwgBlockConfig {
    pub fn new(d_model: usize, window: usize, k: usize) -> Self {
        SwgBlockConfig {
            window,
            k,
            aggregator: AggregatorKind::Conv2dAgg,
            d_model,
            n_heads: DEFAULT_HEADS,
            ff_ratio: DEFAULT_FF_RATIO,
            graph_ffn_ratio: DEFAULT_FFN_RATIO,
            dropout: 0.05,
            module_order: MODULE_ORDERS[0].to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let count = |m| self.module_order.iter().filter(|&&x| x == m).count();
        if self.module_order.len() != 4 || count(F) != 2 || count(A) != 1 || count(G) != 1 {
            return Err(Error::InvalidArgument(format!(
                "module order [{}] must be a permutation of FF, MHSA, SwG, FF",
                format_order(&self.module_order)
            )));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidArgument(format!("d_model {} is not divisible by {} heads", self.d_model, self.n_heads)));
        }
        if self.k == 0 || self.k >= self.d_model {
            return Err(Error::NeighborCount { k: self.k, n: self.d_model });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        if self.window == 0 || self.ff_ratio == 0 || self.graph_ffn_ratio == 0 {
            return Err(Error::InvalidArgument("window and expansion ratios must be positive".into()));
        }
        Ok(())
    }
}

/// Conformer-style block whose convolution module is replaced by the SwG module.
/// Operates on `[B, T, d_model]` with `d_model = F * C` vertices per frame.
#[derive(Clone, Debug)]
pub struct SwgFormerBlock {
    pub cfg: SwgBlockConfig,
    pub ff: [FeedForward; 2],
    pub attention: MultiHeadAttention,
    pub graph_norm: LayerNorm,
    pub graph: SwgModule,
    pub final_norm: LayerNorm,
}

impl SwgFormerBlock {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: SwgBlockConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let ff = [
            FeedForward::new(store, &format!("{name}.ff1"), d, cfg.ff_ratio, cfg.dropout, rng),
            FeedForward::new(store, &format!("{name}.ff2"), d, cfg.ff_ratio, cfg.dropout, rng),
        ];
        let attention = MultiHeadAttention::new(store, &format!("{name}.mhsa"), d, cfg.n_heads, cfg.dropout, rng)?;
        let graph_norm = LayerNorm::new(store, &format!("{name}.swg.norm"), d);
        let swg_cfg = SwgConfig { window: cfg.window, k: cfg.k, aggregator: cfg.aggregator, ffn_ratio: cfg.graph_ffn_ratio };
        let graph = SwgModule::new(store, &format!("{name}.swg"), swg_cfg, rng)?;
        let final_norm = LayerNorm::new(store, &format!("{name}.norm"), d);
        Ok(SwgFormerBlock { cfg, ff, attention, graph_norm, graph, final_norm })
    }

    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 3 || s[2] != self.cfg.d_model {
            return Err(Error::shape("swg_former_block", format!("expected [B, T, {}], got {s:?}", self.cfg.d_model)));
        }
        let mut h = x;
        let mut ff = self.ff.iter();
        for m in &self.cfg.module_order {
            h = match m {
                F => ff.next().expect("two FF modules").forward(g, store, h)?,
                A => self.attention.forward(g, store, h)?,
                G => {
                    let n = self.graph_norm.forward(g, store, h)?;
                    let y = self.graph.forward(g, store, n)?;
                    g.add(h, y)?
                }
            };
        }
        self.final_norm.forward(g, store, h)
    }

    /// Zeroes the weights feeding every residual branch so the block reduces to its final LayerNorm.
    pub fn zero_branches(&self, store: &mut ParamStore) {
        for f in &self.ff {
            f.zero_branch(store);
        }
        self.attention.zero_branch(store);
        let w = self.graph.update.weight;
        let shape = store.get(w).value.shape().to_vec();
        store.get_mut(w).value = Tensor::zeros(&shape);
    }
}
