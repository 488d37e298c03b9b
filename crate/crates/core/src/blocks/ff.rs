use rand::Rng;

use super::nn::{LayerNorm, Linear};
use crate::error::Result;
use crate::numerics::{Graph, ParamStore, Var};

pub const DEFAULT_FF_RATIO: usize = 4;

/// Macaron feed-forward module with a half-step residual:
/// `x + 0.5 * Dropout(W2 Dropout(Swish(W1 LN(x))))`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub norm: LayerNorm,
    pub lin1: Linear,
    pub lin2: Linear,
    pub dropout: f64,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, ratio: usize, dropout: f64, rng: &mut R) -> Self {
        FeedForward {
            norm: LayerNorm::new(store, &format!("{name}.norm"), d),
            lin1: Linear::new(store, &format!("{name}.lin1"), d, ratio * d, true, rng),
            lin2: Linear::new(store, &format!("{name}.lin2"), ratio * d, d, true, rng),
            dropout,
        }
    }

    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.norm.forward(g, store, x)?;
        let h = self.lin1.forward(g, store, h)?;
        let h = g.swish(h);
        let h = g.dropout(h, self.dropout)?;
        let h = self.lin2.forward(g, store, h)?;
        let h = g.dropout(h, self.dropout)?;
        let h = g.scale(h, 0.5);
        g.add(x, h)
    }

    /// Zeroes every weight on the residual branch.
    pub fn zero_branch(&self, store: &mut ParamStore) {
        self.lin1.zero(store);
        self.lin2.zero(store);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{check_gradients, GradCheckOptions, Mode};
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_are_identity_and_shape_is_kept() {
        let mut store = ParamStore::new();
        let ff = FeedForward::new(&mut store, "ff", 6, 4, 0.05, &mut ChaCha8Rng::seed_from_u64(0));
        ff.zero_branch(&mut store);
        for seq in [1, 3, 11] {
            let x = Tensor::uniform(&[2, seq, 6], -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seq as u64));
            let g = Graph::new(Mode::Train, 1);
            let y = ff.forward(&g, &store, g.constant(x.clone())).unwrap();
            assert_eq!(*g.value(y), x);
        }
    }

    #[test]
    fn gradients() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ff = FeedForward::new(&mut store, "ff", 8, 4, 0.05, &mut rng);
        let x = store.add("x", Tensor::uniform(&[2, 5, 8], -1.0, 1.0, &mut rng));
        let w = Tensor::uniform(&[2, 5, 8], -1.0, 1.0, &mut rng);
        let report = check_gradients(
            &mut store,
            |g, s| {
                let y = ff.forward(g, s, g.param(s, x))?;
                let y = g.mul(y, g.constant(w.clone()))?;
                Ok(g.sum(y))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passes(1e-4), "{:?}", report.worst());
    }
}
