use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::blocks::nn::Linear;
use crate::blocks::{sinusoidal_encoding, MsConv, MsConvConfig, SwgFormerBlock};
use crate::features::FEATURE_CHANNELS;
use crate::graph::NeighborIndex;
use crate::numerics::{Graph, Mode, ParamStore, PinnedChoices, Var};
use crate::{Error, Result, Tensor};

/// MS-Conv stack, SwG-former blocks at full frame rate, time pooling and a tanh ACCDOA head.
#[derive(Clone, Debug)]
pub struct SwgFormer {
    pub cfg: ModelConfig,
    pub msconv: Vec<MsConv>,
    pub blocks: Vec<SwgFormerBlock>,
    pub fc1: Linear,
    pub fc2: Linear,
    positions: Tensor,
}

impl SwgFormer {
    pub fn new<R: rand::Rng + ?Sized>(store: &mut ParamStore, cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut c_in = FEATURE_CHANNELS;
        let mut msconv = Vec::with_capacity(cfg.n_msconv);
        for (i, &c_out) in cfg.msconv_channels.iter().enumerate() {
            let mc = MsConvConfig { c_in, c_out, dropout: cfg.dropout };
            msconv.push(MsConv::new(store, &format!("msconv{i}"), mc, rng)?);
            c_in = c_out;
        }
        let blocks = (0..cfg.n_blocks)
            .map(|b| SwgFormerBlock::new(store, &format!("block{b}"), cfg.block_config(b), rng))
            .collect::<Result<Vec<_>>>()?;
        let d = cfg.d_model();
        let hidden = (d / 2).max(1);
        let fc1 = Linear::new(store, "head.fc1", d, hidden, true, rng);
        let fc2 = Linear::new(store, "head.fc2", hidden, 3 * cfg.n_classes, true, rng);
        let positions = sinusoidal_encoding(cfg.frames, d);
        Ok(SwgFormer { cfg, msconv, blocks, fc1, fc2, positions })
    }

    /// Fresh parameters drawn from `cfg.seed`.
    pub fn build(cfg: ModelConfig) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = Self::new(&mut store, cfg, &mut rng)?;
        Ok((model, store))
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.cfg.frames, self.cfg.n_mels, FEATURE_CHANNELS]
    }

    pub fn output_shape(&self) -> [usize; 3] {
        [self.cfg.label_frames, self.cfg.n_classes, 3]
    }

    /// `x: [B, T, F, 7]` features; returns `[B, label_frames, n_classes, 3]`.
    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let s = g.shape(x);
        let [t, f, c] = self.input_shape();
        if s.len() != 4 || s[1..] != [t, f, c] {
            return Err(Error::shape("swg_former", format!("expected [B, {t}, {f}, {c}], got {s:?}")));
        }
        let b = s[0];
        let mut h = g.permute(x, &[0, 3, 1, 2])?;
        for m in &self.msconv {
            h = m.forward(g, store, h)?;
        }
        // [B, C', T, F'] -> [B, T, F' * C'] with feature index f * C' + c.
        let h = g.permute(h, &[0, 2, 3, 1])?;
        let d = self.cfg.d_model();
        let mut h = g.reshape(h, &[b, t, d])?;
        h = g.add_broadcast_const(h, &self.positions)?;
        for blk in &self.blocks {
            h = blk.forward(g, store, h)?;
        }
        let h = g.reshape(h, &[b, 1, t, d])?;
        let h = g.max_pool2d(h, (self.cfg.time_pool(), 1))?;
        let h = g.reshape(h, &[b, self.cfg.label_frames, d])?;
        let h = g.tanh(self.fc1.forward(g, store, h)?);
        let h = g.tanh(self.fc2.forward(g, store, h)?);
        g.reshape(h, &[b, self.cfg.label_frames, self.cfg.n_classes, 3])
    }

    /// Eval-mode neighbor tables of every block's SwG module for one clip `[T, F, 7]`,
    /// one list per block in chunk order.
    pub fn neighbor_tables(&self, store: &ParamStore, features: &Tensor) -> Result<Vec<Vec<NeighborIndex>>> {
        let mut shape = vec![1];
        shape.extend_from_slice(features.shape());
        let pins = PinnedChoices::new();
        let g = Graph::new(Mode::Eval, 0).with_pinned_choices(pins.clone());
        self.forward(&g, store, g.constant(features.reshape(&shape)?))?;
        let pins = pins.borrow();
        Ok(pins.recorded::<Vec<NeighborIndex>>().into_iter().cloned().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reduced_config() -> ModelConfig {
        crate::verify::reduced_model_config()
    }

    fn input(cfg: &ModelConfig, b: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::randn(&[b, cfg.frames, cfg.n_mels, FEATURE_CHANNELS], 1.0, &mut rng)
    }

    #[test]
    fn output_shape_and_range() {
        let cfg = reduced_config();
        let (m, store) = SwgFormer::build(cfg.clone()).unwrap();
        let g = Graph::new(Mode::Eval, 0);
        let x = g.constant(input(&cfg, 2, 1));
        let y = m.forward(&g, &store, x).unwrap();
        assert_eq!(g.shape(y), vec![2, 10, 3, 3]);
        assert!(g.value(y).data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn desk_output_shape() {
        let cfg = ModelConfig::desk();
        let (m, store) = SwgFormer::build(cfg.clone()).unwrap();
        let g = Graph::new(Mode::Eval, 0);
        let y = m.forward(&g, &store, g.constant(input(&cfg, 1, 2))).unwrap();
        assert_eq!(g.shape(y), vec![1, 50, 4, 3]);
    }

    #[test]
    fn rejects_wrong_input() {
        let cfg = reduced_config();
        let (m, store) = SwgFormer::build(cfg.clone()).unwrap();
        let g = Graph::new(Mode::Eval, 0);
        let x = g.constant(Tensor::zeros(&[1, 50, 8, 7]));
        assert!(matches!(m.forward(&g, &store, x), Err(Error::Shape { .. })));
    }

    #[test]
    fn neighbor_tables_per_block() {
        let cfg = reduced_config();
        let (m, store) = SwgFormer::build(cfg.clone()).unwrap();
        let x = input(&cfg, 1, 7);
        let x = x.reshape(&x.shape()[1..]).unwrap();
        let tables = m.neighbor_tables(&store, &x).unwrap();
        assert_eq!(tables.len(), 2);
        // Windows 5 and 25 over 50 frames.
        assert_eq!(tables[0].len(), 10);
        assert_eq!(tables[1].len(), 2);
        assert!(tables.iter().flatten().all(|t| t.n == cfg.d_model() && t.k == cfg.k));
    }

    #[test]
    fn eval_is_deterministic() {
        let cfg = reduced_config();
        let x = input(&cfg, 2, 4);
        let run = || {
            let (m, store) = SwgFormer::build(cfg.clone()).unwrap();
            let g = Graph::new(Mode::Eval, 9);
            let y = m.forward(&g, &store, g.constant(x.clone())).unwrap();
            let v = g.value(y).clone();
            v
        };
        assert_eq!(run().data(), run().data());
    }
}
