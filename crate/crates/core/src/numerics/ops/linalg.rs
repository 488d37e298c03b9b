use crate::error::{Error, Result};
use crate::numerics::graph::{Graph, Var};
use crate::numerics::kernels::{gemm, Trans};
use crate::tensor::Tensor;

impl Graph {
    /// `[m x p] . [p x q] -> [m x q]`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} . {sb:?}")));
        }
        let (m, p, q) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * q];
        gemm(m, p, q, 1.0, self.value(a).data(), Trans::No, self.value(b).data(), Trans::No, 0.0, &mut out);
        let out = Tensor::from_parts(vec![m, q], out);
        Ok(self.push_op(out, &[a, b], move |c| {
            let da = c.needs[0].then(|| {
                let mut d = vec![0.0; m * p];
                gemm(m, q, p, 1.0, c.grad.data(), Trans::No, c.inputs[1].data(), Trans::Yes, 0.0, &mut d);
                Tensor::from_parts(vec![m, p], d)
            });
            let db = c.needs[1].then(|| {
                let mut d = vec![0.0; p * q];
                gemm(p, m, q, 1.0, c.inputs[0].data(), Trans::Yes, c.grad.data(), Trans::No, 0.0, &mut d);
                Tensor::from_parts(vec![p, q], d)
            });
            vec![da, db]
        }))
    }

    /// Batched product `[g x m x p] . [g x p x q] -> [g x m x q]`.
    pub fn bmm(&self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("bmm", format!("{sa:?} . {sb:?}")));
        }
        let (g, m, p, q) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; g * m * q];
        {
            let (va, vb) = (self.value(a), self.value(b));
            for i in 0..g {
                gemm(
                    m,
                    p,
                    q,
                    1.0,
                    &va.data()[i * m * p..(i + 1) * m * p],
                    Trans::No,
                    &vb.data()[i * p * q..(i + 1) * p * q],
                    Trans::No,
                    0.0,
                    &mut out[i * m * q..(i + 1) * m * q],
                );
            }
        }
        let out = Tensor::from_parts(vec![g, m, q], out);
        Ok(self.push_op(out, &[a, b], move |c| {
            let da = c.needs[0].then(|| {
                let mut d = vec![0.0; g * m * p];
                for i in 0..g {
                    gemm(
                        m,
                        q,
                        p,
                        1.0,
                        &c.grad.data()[i * m * q..(i + 1) * m * q],
                        Trans::No,
                        &c.inputs[1].data()[i * p * q..(i + 1) * p * q],
                        Trans::Yes,
                        0.0,
                        &mut d[i * m * p..(i + 1) * m * p],
                    );
                }
                Tensor::from_parts(vec![g, m, p], d)
            });
            let db = c.needs[1].then(|| {
                let mut d = vec![0.0; g * p * q];
                for i in 0..g {
                    gemm(
                        p,
                        m,
                        q,
                        1.0,
                        &c.inputs[0].data()[i * m * p..(i + 1) * m * p],
                        Trans::Yes,
                        &c.grad.data()[i * m * q..(i + 1) * m * q],
                        Trans::No,
                        0.0,
                        &mut d[i * p * q..(i + 1) * p * q],
                    );
                }
                Tensor::from_parts(vec![g, p, q], d)
            });
            vec![da, db]
        }))
    }
}

#[cfg(test)]
mod tests {
    use crate::numerics::{Graph, Mode};
    use crate::tensor::Tensor;

    #[test]
    fn identity_and_hand_products() {
        let g = Graph::new(Mode::Eval, 0);
        let a = g.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let i = g.constant(Tensor::eye(2));
        let y = g.matmul(a, i).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);

        let r = g.constant(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
        let col = g.constant(Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap());
        let y = g.matmul(r, col).unwrap();
        assert_eq!(g.value(y).data(), &[11.0]);
    }

    #[test]
    fn inner_extent_mismatch_is_rejected() {
        let g = Graph::new(Mode::Eval, 0);
        let a = g.constant(Tensor::ones(&[2, 3]));
        let b = g.constant(Tensor::ones(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3] . [2, 3]"), "{err}");
        assert!(g.bmm(g.constant(Tensor::ones(&[2, 2, 3])), g.constant(Tensor::ones(&[3, 3, 1]))).is_err());
    }

    #[test]
    fn bmm_matches_per_slice_matmul() {
        let g = Graph::new(Mode::Eval, 0);
        let a = Tensor::from_fn(&[3, 2, 4], |i| (i as f64 * 0.4).sin());
        let b = Tensor::from_fn(&[3, 4, 5], |i| (i as f64 * 0.2).cos());
        let y = g.bmm(g.constant(a.clone()), g.constant(b.clone())).unwrap();
        for s in 0..3 {
            for i in 0..2 {
                for j in 0..5 {
                    let want: f64 = (0..4).map(|p| a.at(&[s, i, p]) * b.at(&[s, p, j])).sum();
                    assert!((g.value(y).at(&[s, i, j]) - want).abs() < 1e-12);
                }
            }
        }
    }
}
