use rand::Rng;

use super::nn::{BatchNorm2d, Conv2d};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore, Var};
use crate::tensor::Tensor;

pub const MSCONV_POOL: (usize, usize) = (1, 2);

#[derive(Clone, Debug, PartialEq)]
pub struct MsConvConfig {
    pub c_in: usize,
    pub c_out: usize,
    pub dropout: f64,
}

/// conv -> BN -> Swish -> conv -> BN, padded to keep T x F.
#[derive(Clone, Debug)]
pub struct DualConv {
    pub conv_a: Conv2d,
    pub bn_a: BatchNorm2d,
    pub conv_b: Conv2d,
    pub bn_b: BatchNorm2d,
}

impl DualConv {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, kernel: usize, rng: &mut R) -> Self {
        DualConv {
            conv_a: Conv2d::new(store, &format!("{name}.conv_a"), c_in, c_out, kernel, rng),
            bn_a: BatchNorm2d::new(store, &format!("{name}.bn_a"), c_out),
            conv_b: Conv2d::new(store, &format!("{name}.conv_b"), c_out, c_out, kernel, rng),
            bn_b: BatchNorm2d::new(store, &format!("{name}.bn_b"), c_out),
        }
    }

    fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.conv_a.forward(g, store, x)?;
        let h = self.bn_a.forward(g, store, h)?;
        let h = g.swish(h);
        let h = self.conv_b.forward(g, store, h)?;
        self.bn_b.forward(g, store, h)
    }
}

/// Multi-scale convolution block:
/// `Dropout(MaxPool(1,2)(w1 * dual3x3(x) + w2 * dual5x5(x) + w3 * proj(x)))`.
#[derive(Clone, Debug)]
pub struct MsConv {
    pub cfg: MsConvConfig,
    pub dual3: DualConv,
    pub dual5: DualConv,
    /// 1x1 projection on the residual path when the channel count changes.
    pub proj: Option<Conv2d>,
    pub w1: ParamId,
    pub w2: ParamId,
    pub w3: ParamId,
}

impl MsConv {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: MsConvConfig, rng: &mut R) -> Result<Self> {
        if cfg.c_in == 0 || cfg.c_out == 0 {
            return Err(Error::InvalidArgument("MS-Conv channel counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::InvalidArgument(format!("dropout rate {} outside [0, 1)", cfg.dropout)));
        }
        let dual3 = DualConv::new(store, &format!("{name}.dual3"), cfg.c_in, cfg.c_out, 3, rng);
        let dual5 = DualConv::new(store, &format!("{name}.dual5"), cfg.c_in, cfg.c_out, 5, rng);
        let proj = (cfg.c_in != cfg.c_out).then(|| Conv2d::new(store, &format!("{name}.proj"), cfg.c_in, cfg.c_out, 1, rng));
        let w1 = store.add(format!("{name}.w1"), Tensor::ones(&[1]));
        let w2 = store.add(format!("{name}.w2"), Tensor::ones(&[1]));
        let w3 = store.add(format!("{name}.w3"), Tensor::ones(&[1]));
        Ok(MsConv { cfg, dual3, dual5, proj, w1, w2, w3 })
    }

    /// `x: [B, C_in, T, F]` with even `F`; returns `[B, C_out, T, F / 2]`.
    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 4 || s[1] != self.cfg.c_in {
            return Err(Error::shape("ms_conv", format!("expected [B, {}, T, F], got {s:?}", self.cfg.c_in)));
        }
        if s[3] % 2 != 0 {
            return Err(Error::InvalidArgument(format!("MS-Conv needs an even frequency extent, got {}", s[3])));
        }
        let x3 = self.dual3.forward(g, store, x)?;
        let x5 = self.dual5.forward(g, store, x)?;
        let res = match &self.proj {
            Some(p) => p.forward(g, store, x)?,
            None => x,
        };
        let a = g.mul_scalar(x3, g.param(store, self.w1))?;
        let b = g.mul_scalar(x5, g.param(store, self.w2))?;
        let c = g.mul_scalar(res, g.param(store, self.w3))?;
        let sum = g.add(a, b)?;
        let sum = g.add(sum, c)?;
        let pooled = g.max_pool2d(sum, MSCONV_POOL)?;
        g.dropout(pooled, self.cfg.dropout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{check_gradients, GradCheckOptions, Mode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(c_in: usize, c_out: usize) -> MsConvConfig {
        MsConvConfig { c_in, c_out, dropout: 0.05 }
    }

    #[test]
    fn halves_frequency_keeps_time() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = MsConv::new(&mut store, "m", cfg(7, 4), &mut rng).unwrap();
        let g = Graph::new(Mode::Train, 0);
        let x = g.constant(Tensor::uniform(&[2, 7, 6, 16], -1.0, 1.0, &mut rng));
        assert_eq!(g.shape(m.forward(&g, &store, x).unwrap()), vec![2, 4, 6, 8]);
        let odd = g.constant(Tensor::zeros(&[1, 7, 6, 5]));
        assert!(m.forward(&g, &store, odd).is_err());
    }

    #[test]
    fn residual_only_path_is_pooled_input() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = MsConv::new(&mut store, "m", cfg(3, 3), &mut rng).unwrap();
        assert!(m.proj.is_none());
        store.get_mut(m.w1).value = Tensor::zeros(&[1]);
        store.get_mut(m.w2).value = Tensor::zeros(&[1]);
        let x = Tensor::uniform(&[2, 3, 4, 6], -1.0, 1.0, &mut rng);
        let g = Graph::new(Mode::Eval, 0);
        let xv = g.constant(x);
        let y = m.forward(&g, &store, xv).unwrap();
        let want = g.max_pool2d(xv, (1, 2)).unwrap();
        assert_eq!(*g.value(y), *g.value(want));
    }

    #[test]
    fn gradients_including_fusion_scalars() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = MsConv::new(&mut store, "m", cfg(2, 3), &mut rng).unwrap();
        // Perturb the fusion weights away from 1 so each path contributes differently.
        store.get_mut(m.w1).value = Tensor::scalar(0.7).reshape(&[1]).unwrap();
        store.get_mut(m.w2).value = Tensor::scalar(-0.4).reshape(&[1]).unwrap();
        store.get_mut(m.w3).value = Tensor::scalar(1.3).reshape(&[1]).unwrap();
        let x = store.add("x", Tensor::uniform(&[2, 2, 4, 6], -1.0, 1.0, &mut rng));
        let w = Tensor::uniform(&[2, 3, 4, 3], -1.0, 1.0, &mut rng);
        let report = check_gradients(
            &mut store,
            |g, s| {
                let y = m.forward(g, s, g.param(s, x))?;
                let y = g.mul(y, g.constant(w.clone()))?;
                Ok(g.sum(y))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passes(1e-4), "{:?}", report.worst());
        for name in ["m.w1", "m.w2", "m.w3"] {
            assert!(report.params.iter().any(|p| p.name == name && p.checked == 1));
        }
    }
}
