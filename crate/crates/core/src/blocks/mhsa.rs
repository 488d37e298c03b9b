use rand::Rng;

use super::nn::{LayerNorm, Linear};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Var};
use crate::tensor::Tensor;

pub const DEFAULT_HEADS: usize = 8;

/// Pre-norm multi-head self-attention with residual: `x + Dropout(MHA(LN(x)))`.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub d_model: usize,
    pub heads: usize,
    pub norm: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub dropout: f64,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::InvalidArgument(format!("d_model {d_model} is not divisible by {heads} heads")));
        }
        Ok(MultiHeadAttention {
            d_model,
            heads,
            norm: LayerNorm::new(store, &format!("{name}.norm"), d_model),
            q: Linear::new(store, &format!("{name}.q"), d_model, d_model, true, rng),
            k: Linear::new(store, &format!("{name}.k"), d_model, d_model, true, rng),
            v: Linear::new(store, &format!("{name}.v"), d_model, d_model, true, rng),
            out: Linear::new(store, &format!("{name}.out"), d_model, d_model, true, rng),
            dropout,
        })
    }

    pub fn forward(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<Var> {
        self.forward_with_attention(g, store, x).map(|(y, _)| y)
    }

    /// Also returns the attention weights, shaped `[B * heads, T, T]`.
    pub fn forward_with_attention(&self, g: &Graph, store: &ParamStore, x: Var) -> Result<(Var, Tensor)> {
        let s = g.shape(x);
        if s.len() != 3 || s[2] != self.d_model {
            return Err(Error::shape("mhsa", format!("expected [B, T, {}], got {s:?}", self.d_model)));
        }
        let (b, t, h) = (s[0], s[1], self.heads);
        let dh = self.d_model / h;
        let split = |v: Var, transpose: bool| -> Result<Var> {
            let v = g.reshape(v, &[b, t, h, dh])?;
            if transpose {
                let v = g.permute(v, &[0, 2, 3, 1])?;
                g.reshape(v, &[b * h, dh, t])
            } else {
                let v = g.permute(v, &[0, 2, 1, 3])?;
                g.reshape(v, &[b * h, t, dh])
            }
        };
        let xn = self.norm.forward(g, store, x)?;
        let q = split(self.q.forward(g, store, xn)?, false)?;
        let kt = split(self.k.forward(g, store, xn)?, true)?;
        let v = split(self.v.forward(g, store, xn)?, false)?;
        let scores = g.bmm(q, kt)?;
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let attn = g.softmax(scores, 2)?;
        let weights = g.value(attn).clone();
        let ctx = g.bmm(attn, v)?;
        let ctx = g.reshape(ctx, &[b, h, t, dh])?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[b, t, self.d_model])?;
        let y = self.out.forward(g, store, ctx)?;
        let y = g.dropout(y, self.dropout)?;
        Ok((g.add(x, y)?, weights))
    }

    pub fn zero_branch(&self, store: &mut ParamStore) {
        self.v.zero(store);
        self.out.zero(store);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{check_gradients, GradCheckOptions, Mode, NORM_EPS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_indivisible_width() {
        let mut store = ParamStore::new();
        assert!(MultiHeadAttention::new(&mut store, "a", 10, 4, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn zero_value_and_output_projections_are_identity() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = MultiHeadAttention::new(&mut store, "a", 16, 8, 0.05, &mut rng).unwrap();
        a.zero_branch(&mut store);
        let x = Tensor::uniform(&[2, 7, 16], -1.0, 1.0, &mut rng);
        let g = Graph::new(Mode::Train, 0);
        let y = a.forward(&g, &store, g.constant(x.clone())).unwrap();
        assert_eq!(*g.value(y), x);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = MultiHeadAttention::new(&mut store, "a", 8, 2, 0.0, &mut rng).unwrap();
        let g = Graph::new(Mode::Eval, 0);
        let x = g.constant(Tensor::uniform(&[3, 5, 8], -2.0, 2.0, &mut rng));
        let (_, w) = a.forward_with_attention(&g, &store, x).unwrap();
        assert_eq!(w.shape(), &[6, 5, 5]);
        for row in w.data().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_head_two_by_two_matches_hand_computation() {
        let mut store = ParamStore::new();
        let a = MultiHeadAttention::new(&mut store, "a", 2, 1, 0.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let set = |store: &mut ParamStore, lin: &Linear, w: [f64; 4]| {
            store.get_mut(lin.weight).value = Tensor::new(vec![2, 2], w.to_vec()).unwrap();
            store.get_mut(lin.bias.unwrap()).value = Tensor::zeros(&[2]);
        };
        set(&mut store, &a.q, [1.0, 0.0, 0.0, 1.0]);
        set(&mut store, &a.k, [2.0, 0.0, 0.0, 1.0]);
        set(&mut store, &a.v, [1.0, 1.0, 0.0, 1.0]);
        set(&mut store, &a.out, [1.0, 0.0, 0.0, 1.0]);
        let x = [[3.0, 1.0], [0.0, 2.0]];

        // LayerNorm of a 2-vector [p, q] is [s, -s] with s = sign(p - q) * |p - q| / sqrt((p - q)^2 + 4 eps).
        let ln = |r: [f64; 2]| {
            let d = r[0] - r[1];
            let s = d / (d * d + 4.0 * NORM_EPS).sqrt();
            [s, -s]
        };
        let n = [ln(x[0]), ln(x[1])];
        let q = n;
        let k = [[2.0 * n[0][0], n[0][1]], [2.0 * n[1][0], n[1][1]]];
        let v = [[n[0][0], n[0][0] + n[0][1]], [n[1][0], n[1][0] + n[1][1]]];
        let mut want = [[0.0; 2]; 2];
        for i in 0..2 {
            let s: Vec<f64> = (0..2).map(|j| (q[i][0] * k[j][0] + q[i][1] * k[j][1]) / 2f64.sqrt()).collect();
            let e: Vec<f64> = s.iter().map(|v| v.exp()).collect();
            let z = e[0] + e[1];
            for c in 0..2 {
                want[i][c] = x[i][c] + (e[0] * v[0][c] + e[1] * v[1][c]) / z;
            }
        }

        let g = Graph::new(Mode::Eval, 0);
        let xv = g.constant(Tensor::new(vec![1, 2, 2], vec![3.0, 1.0, 0.0, 2.0]).unwrap());
        let y = a.forward(&g, &store, xv).unwrap();
        let got = g.value(y);
        for i in 0..2 {
            for c in 0..2 {
                assert!((got.at(&[0, i, c]) - want[i][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = MultiHeadAttention::new(&mut store, "a", 8, 2, 0.05, &mut rng).unwrap();
        let x = store.add("x", Tensor::uniform(&[2, 4, 8], -1.0, 1.0, &mut rng));
        let w = Tensor::uniform(&[2, 4, 8], -1.0, 1.0, &mut rng);
        let report = check_gradients(
            &mut store,
            |g, s| {
                let y = a.forward(g, s, g.param(s, x))?;
                let y = g.mul(y, g.constant(w.clone()))?;
                Ok(g.sum(y))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.passes(1e-4), "{:?}", report.worst());
    }
}
