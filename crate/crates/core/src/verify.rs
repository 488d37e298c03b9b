//! Finite-difference gradient suites shared by the test targets and `swg gradcheck`.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{FeedForward, MsConv, MsConvConfig, MultiHeadAttention, SwgBlockConfig, SwgFormerBlock};
use crate::graph::{knn_graph, AggregatorKind, NeighborTable, SwgConfig, SwgModule};
use crate::model::{ModelConfig, SwgFormer};
use crate::numerics::{check_gradients, GradCheckOptions, GradCheckReport, Graph, ParamStore, RunningStats, Var};
use crate::{Result, Tensor};

pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Op,
    Block,
    Model,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Op => "op",
            Level::Block => "block",
            Level::Model => "model",
        }
    }

    /// Blocks are held to the op-level bound.
    pub fn tolerance(self) -> f64 {
        match self {
            Level::Op | Level::Block => OP_TOLERANCE,
            Level::Model => MODEL_TOLERANCE,
        }
    }
}

type Runner = Box<dyn Fn() -> Result<GradCheckReport> + Send + Sync>;

pub struct GradCase {
    pub name: String,
    pub level: Level,
    run: Runner,
}

impl GradCase {
    fn new(name: &str, level: Level, run: impl Fn() -> Result<GradCheckReport> + Send + Sync + 'static) -> Self {
        GradCase { name: name.to_string(), level, run: Box::new(run) }
    }

    pub fn run(&self) -> CaseOutcome {
        let start = Instant::now();
        let result = (self.run)();
        let elapsed = start.elapsed();
        let tolerance = self.level.tolerance();
        match result {
            Ok(report) => {
                let max_rel_err = report.max_rel_err();
                let worst = report
                    .worst()
                    .map(|w| format!("{} entry {} analytic {:.6e} numeric {:.6e}", w.name, w.worst.0, w.worst.1, w.worst.2))
                    .unwrap_or_default();
                CaseOutcome {
                    name: self.name.clone(),
                    level: self.level,
                    tolerance,
                    max_rel_err,
                    passed: max_rel_err < tolerance,
                    detail: worst,
                    elapsed,
                }
            }
            Err(e) => CaseOutcome {
                name: self.name.clone(),
                level: self.level,
                tolerance,
                max_rel_err: f64::INFINITY,
                passed: false,
                detail: e.to_string(),
                elapsed,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct CaseOutcome {
    pub name: String,
    pub level: Level,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub passed: bool,
    /// Worst entry, or the error that stopped the case.
    pub detail: String,
    pub elapsed: Duration,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `sum(y * w)` with fixed random weights, so every output entry reaches the loss.
fn weighted_sum(g: &Graph, y: Var, seed: u64) -> Result<Var> {
    let w = Tensor::uniform(&g.shape(y), -1.0, 1.0, &mut rng(seed ^ 0x5eed));
    Ok(g.sum(g.mul(y, g.constant(w))?))
}

/// Checks `f` with every input a parameter drawn from U(-1, 1).
fn op_check(shapes: &[&[usize]], seed: u64, f: impl Fn(&Graph, &[Var]) -> Result<Var>) -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let mut r = rng(seed);
    let ids: Vec<_> =
        shapes.iter().enumerate().map(|(i, s)| store.add(format!("in{i}"), Tensor::uniform(s, -1.0, 1.0, &mut r))).collect();
    check_gradients(
        &mut store,
        |g, s| {
            let vars: Vec<Var> = ids.iter().map(|&id| g.param(s, id)).collect();
            let y = f(g, &vars)?;
            weighted_sum(g, y, seed)
        },
        &GradCheckOptions::default(),
    )
}

/// Two random graphs of `n` vertices with `k` neighbors each.
fn neighbor_table(n: usize, k: usize, seed: u64) -> Result<NeighborTable> {
    let mut r = rng(seed);
    let graphs = (0..2)
        .map(|_| knn_graph(Tensor::uniform(&[n, 3], -1.0, 1.0, &mut r).data(), n, 3, k))
        .collect::<Result<Vec<_>>>()?;
    NeighborTable::new(&graphs)
}

fn op_cases() -> Vec<GradCase> {
    let op = |name: &str, run: fn() -> Result<GradCheckReport>| GradCase::new(name, Level::Op, run);
    vec![
        op("add", || op_check(&[&[3, 4], &[3, 4]], 1, |g, v| g.add(v[0], v[1]))),
        op("sub", || op_check(&[&[3, 4], &[3, 4]], 2, |g, v| g.sub(v[0], v[1]))),
        op("mul", || op_check(&[&[3, 4], &[3, 4]], 3, |g, v| g.mul(v[0], v[1]))),
        op("scale", || op_check(&[&[3, 4]], 4, |g, v| Ok(g.scale(v[0], -1.7)))),
        op("mul_scalar", || op_check(&[&[3, 4], &[1]], 5, |g, v| g.mul_scalar(v[0], v[1]))),
        op("add_bias", || op_check(&[&[2, 3, 4], &[4]], 6, |g, v| g.add_bias(v[0], v[1]))),
        op("add_broadcast_const", || {
            let addend = Tensor::uniform(&[3, 4], -1.0, 1.0, &mut rng(70));
            op_check(&[&[2, 3, 4]], 7, move |g, v| g.add_broadcast_const(v[0], &addend))
        }),
        op("reshape", || op_check(&[&[2, 6]], 8, |g, v| g.reshape(v[0], &[3, 4]))),
        op("permute", || op_check(&[&[2, 3, 4, 5]], 9, |g, v| g.permute(v[0], &[0, 2, 3, 1]))),
        op("concat_last", || op_check(&[&[2, 3, 2], &[2, 3, 4]], 10, |g, v| g.concat_last(v[0], v[1]))),
        op("sum", || op_check(&[&[3, 4]], 11, |g, v| Ok(g.sum(v[0])))),
        op("mean", || op_check(&[&[3, 4]], 12, |g, v| Ok(g.mean(v[0])))),
        op("mse", || op_check(&[&[3, 4], &[3, 4]], 13, |g, v| g.mse(v[0], v[1]))),
        op("matmul", || op_check(&[&[3, 5], &[5, 4]], 14, |g, v| g.matmul(v[0], v[1]))),
        op("bmm", || op_check(&[&[2, 3, 5], &[2, 5, 4]], 15, |g, v| g.bmm(v[0], v[1]))),
        op("conv2d", || op_check(&[&[2, 3, 5, 6], &[4, 3, 3, 3]], 16, |g, v| g.conv2d(v[0], v[1], (1, 1), (1, 1)))),
        op("conv2d_strided", || op_check(&[&[1, 2, 6, 7], &[3, 2, 2, 3]], 17, |g, v| g.conv2d(v[0], v[1], (2, 1), (0, 1)))),
        op("max_pool2d", || op_check(&[&[2, 3, 4, 6]], 18, |g, v| g.max_pool2d(v[0], (2, 3)))),
        op("layer_norm", || op_check(&[&[2, 3, 6], &[6], &[6]], 19, |g, v| g.layer_norm(v[0], v[1], v[2]))),
        op("batch_norm", batch_norm_case),
        op("softmax_last", || op_check(&[&[2, 3, 5]], 21, |g, v| g.softmax(v[0], 2))),
        op("softmax_inner", || op_check(&[&[2, 3, 5]], 22, |g, v| g.softmax(v[0], 1))),
        op("dropout", || op_check(&[&[4, 8]], 23, |g, v| g.dropout(v[0], 0.3))),
        op("gelu", || op_check(&[&[3, 4]], 24, |g, v| Ok(g.gelu(v[0])))),
        op("swish", || op_check(&[&[3, 4]], 25, |g, v| Ok(g.swish(v[0])))),
        op("tanh", || op_check(&[&[3, 4]], 26, |g, v| Ok(g.tanh(v[0])))),
        op("sigmoid", || op_check(&[&[3, 4]], 27, |g, v| Ok(g.sigmoid(v[0])))),
        op("gather_neighbors", || {
            let t = neighbor_table(7, 3, 28)?;
            op_check(&[&[2, 7, 4]], 28, move |g, v| g.gather_neighbors(v[0], &t))
        }),
        op("neighbor_conv", || {
            let t = neighbor_table(7, 3, 29)?;
            op_check(&[&[2, 7, 4], &[3], &[1]], 29, move |g, v| g.neighbor_conv(v[0], &t, v[1], v[2]))
        }),
        op("neighbor_max_relative", || {
            let t = neighbor_table(7, 3, 30)?;
            op_check(&[&[2, 7, 4]], 30, move |g, v| g.neighbor_max_relative(v[0], &t))
        }),
        op("neighbor_mean", || {
            let t = neighbor_table(7, 3, 31)?;
            op_check(&[&[2, 7, 4]], 31, move |g, v| g.neighbor_mean(v[0], &t))
        }),
        op("neighbor_gin", || {
            let t = neighbor_table(7, 3, 32)?;
            op_check(&[&[2, 7, 4], &[1]], 32, move |g, v| g.neighbor_gin(v[0], &t, v[1]))
        }),
    ]
}

fn batch_norm_case() -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let mut r = rng(20);
    let x = store.add("x", Tensor::uniform(&[3, 2, 4, 5], -1.0, 1.0, &mut r));
    let gamma = store.add("gamma", Tensor::uniform(&[2], 0.5, 1.5, &mut r));
    let beta = store.add("beta", Tensor::uniform(&[2], -0.5, 0.5, &mut r));
    let stats = RunningStats {
        mean: store.add_buffer("running_mean", Tensor::zeros(&[2])),
        var: store.add_buffer("running_var", Tensor::ones(&[2])),
    };
    check_gradients(
        &mut store,
        |g, s| {
            let y = g.batch_norm(g.param(s, x), 1, g.param(s, gamma), g.param(s, beta), stats, s)?;
            weighted_sum(g, y, 20)
        },
        &GradCheckOptions::default(),
    )
}

/// Checks a module applied to a parameter input `x`, through a weighted sum of its output.
fn module_check(
    store: &mut ParamStore,
    input: &[usize],
    seed: u64,
    opts: &GradCheckOptions,
    f: impl Fn(&Graph, &ParamStore, Var) -> Result<Var>,
) -> Result<GradCheckReport> {
    let x = store.add("x", Tensor::uniform(input, -1.0, 1.0, &mut rng(seed)));
    check_gradients(
        store,
        |g, s| {
            let y = f(g, s, g.param(s, x))?;
            weighted_sum(g, y, seed)
        },
        opts,
    )
}

fn block_cases() -> Vec<GradCase> {
    let mut cases = vec![
        GradCase::new("ff", Level::Block, || {
            let mut store = ParamStore::new();
            let ff = FeedForward::new(&mut store, "ff", 8, 4, 0.05, &mut rng(40));
            module_check(&mut store, &[2, 5, 8], 40, &GradCheckOptions::default(), |g, s, x| ff.forward(g, s, x))
        }),
        GradCase::new("mhsa", Level::Block, || {
            let mut store = ParamStore::new();
            let m = MultiHeadAttention::new(&mut store, "mhsa", 8, 2, 0.1, &mut rng(41))?;
            module_check(&mut store, &[2, 5, 8], 41, &GradCheckOptions::default(), |g, s, x| m.forward(g, s, x))
        }),
    ];
    for kind in AggregatorKind::ALL {
        let name = format!("swg_module_{kind}");
        cases.push(GradCase::new(&name, Level::Block, move || {
            let mut store = ParamStore::new();
            let m = SwgModule::new(&mut store, "swg", SwgConfig::new(5, 4, kind), &mut rng(42))?;
            if kind == AggregatorKind::GinSum {
                let eps = store.find("swg.agg.eps").expect("gin eps");
                store.set_value(eps, Tensor::scalar(0.3))?;
            }
            module_check(&mut store, &[1, 10, 12], 42, &GradCheckOptions::default(), |g, s, x| m.forward(g, s, x))
        }));
    }
    cases.push(GradCase::new("swg_former_block", Level::Block, || {
        // T = 10 frames, d_model = 24 vertices, windows of 5, k = 4.
        let mut store = ParamStore::new();
        let cfg = SwgBlockConfig { n_heads: 2, ..SwgBlockConfig::new(24, 5, 4) };
        let b = SwgFormerBlock::new(&mut store, "block", cfg, &mut rng(43))?;
        let opts = GradCheckOptions { max_entries: Some(12), ..Default::default() };
        module_check(&mut store, &[1, 10, 24], 43, &opts, |g, s, x| b.forward(g, s, x))
    }));
    cases.push(GradCase::new("msconv", Level::Block, || {
        let mut store = ParamStore::new();
        let m = MsConv::new(&mut store, "msconv", MsConvConfig { c_in: 2, c_out: 3, dropout: 0.1 }, &mut rng(44))?;
        // Fusion weights away from 1 so each path contributes differently.
        for (name, v) in [("msconv.w1", 0.7), ("msconv.w2", -0.4), ("msconv.w3", 1.3)] {
            let id = store.find(name).expect("fusion weight");
            store.set_value(id, Tensor::full(&[1], v))?;
        }
        module_check(&mut store, &[2, 2, 4, 6], 44, &GradCheckOptions::default(), |g, s, x| m.forward(g, s, x))
    }));
    cases
}

/// T = 50, F = 16, one MS-Conv to 4 channels (d_model 32), two blocks with windows 5 and 25.
pub fn reduced_model_config() -> ModelConfig {
    ModelConfig {
        frames: 50,
        n_mels: 16,
        n_msconv: 1,
        msconv_channels: vec![4],
        n_blocks: 2,
        window_group: vec![5, 25],
        k: 6,
        aggregator: AggregatorKind::Conv2dAgg,
        n_heads: 4,
        ff_ratio: 2,
        graph_ffn_ratio: 2,
        dropout: 0.0,
        n_classes: 3,
        label_frames: 10,
        seed: 3,
        ..ModelConfig::paper()
    }
}

fn model_case() -> GradCase {
    GradCase::new("reduced_model", Level::Model, || {
        let cfg = reduced_model_config();
        let (m, mut store) = SwgFormer::build(cfg.clone())?;
        let [t, f, c] = m.input_shape();
        let x = Tensor::randn(&[2, t, f, c], 1.0, &mut rng(5));
        let target = Tensor::uniform(&[2, cfg.label_frames, cfg.n_classes, 3], -1.0, 1.0, &mut rng(6));
        let opts = GradCheckOptions { max_entries: Some(6), ..GradCheckOptions::default() };
        check_gradients(
            &mut store,
            |g, s| {
                let y = m.forward(g, s, g.constant(x.clone()))?;
                g.mse(y, g.constant(target.clone()))
            },
            &opts,
        )
    })
}

/// Every differentiable op, each block, and the reduced whole model.
pub fn gradient_suite() -> Vec<GradCase> {
    let mut cases = op_cases();
    cases.extend(block_cases());
    cases.push(model_case());
    cases
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_cases_pass() {
        for case in op_cases() {
            let out = case.run();
            assert!(out.passed, "{}: {:.3e} ({})", out.name, out.max_rel_err, out.detail);
        }
    }

    #[test]
    fn block_cases_pass() {
        for case in block_cases() {
            let out = case.run();
            assert!(out.passed, "{}: {:.3e} ({})", out.name, out.max_rel_err, out.detail);
        }
    }

    #[test]
    fn model_case_passes() {
        let out = model_case().run();
        assert!(out.passed, "{:.3e} ({})", out.max_rel_err, out.detail);
    }

    #[test]
    fn names_are_unique() {
        let mut names: Vec<_> = gradient_suite().into_iter().map(|c| c.name).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
    }

    #[test]
    fn failures_are_reported_not_raised() {
        let case = GradCase::new("broken", Level::Op, || op_check(&[&[2, 3], &[4, 5]], 0, |g, v| g.add(v[0], v[1])));
        let out = case.run();
        assert!(!out.passed);
        assert!(out.detail.contains("shape"));
    }
}
