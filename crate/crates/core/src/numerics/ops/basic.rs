//! Elementwise arithmetic, shape manipulation and reductions.

use crate::error::{Error, Result};
use crate::numerics::graph::{Graph, Var};
use crate::tensor::Tensor;

impl Graph {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(&self.value(b), |x, y| x + y);
        Ok(self.push_op(out, &[a, b], |c| vec![Some(c.grad.clone()), Some(c.grad.clone())]))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(&self.value(b), |x, y| x - y);
        Ok(self.push_op(out, &[a, b], |c| vec![Some(c.grad.clone()), Some(c.grad.map(|g| -g))]))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(&self.value(b), |x, y| x * y);
        Ok(self.push_op(out, &[a, b], |c| {
            vec![
                c.needs[0].then(|| c.grad.zip_map(c.inputs[1], |g, y| g * y)),
                c.needs[1].then(|| c.grad.zip_map(c.inputs[0], |g, x| g * x)),
            ]
        }))
    }

    pub fn scale(&self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push_op(out, &[a], move |c| vec![Some(c.grad.map(|g| g * factor))])
    }

    /// Multiplies every element of `a` by the single value held in `s`.
    pub fn mul_scalar(&self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::shape("mul_scalar", format!("scalar operand has shape {:?}", self.shape(s))));
        }
        let k = self.value(s).item();
        let out = self.value(a).map(|x| x * k);
        Ok(self.push_op(out, &[a, s], |c| {
            let k = c.inputs[1].item();
            vec![
                c.needs[0].then(|| c.grad.map(|g| g * k)),
                c.needs[1].then(|| {
                    let dot: f64 = c.grad.data().iter().zip(c.inputs[0].data()).map(|(g, x)| g * x).sum();
                    Tensor::scalar(dot)
                }),
            ]
        }))
    }

    /// Adds a vector along the last axis of `x`.
    pub fn add_bias(&self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x);
        let bs = self.shape(bias);
        let d = *xs.last().unwrap();
        if bs != [d] {
            return Err(Error::shape("add_bias", format!("bias {bs:?} for input {xs:?}")));
        }
        let mut out = self.value(x).clone();
        {
            let b = self.value(bias);
            for row in out.data_mut().chunks_exact_mut(d) {
                for (o, bv) in row.iter_mut().zip(b.data()) {
                    *o += bv;
                }
            }
        }
        Ok(self.push_op(out, &[x, bias], move |c| {
            let db = c.needs[1].then(|| {
                let mut acc = vec![0.0; d];
                for row in c.grad.data().chunks_exact(d) {
                    for (a, g) in acc.iter_mut().zip(row) {
                        *a += g;
                    }
                }
                Tensor::from_parts(vec![d], acc)
            });
            vec![Some(c.grad.clone()), db]
        }))
    }

    /// Adds a constant whose shape is a trailing suffix of `x`'s shape.
    pub fn add_broadcast_const(&self, x: Var, addend: &Tensor) -> Result<Var> {
        let xs = self.shape(x);
        let cs = addend.shape();
        if cs.len() > xs.len() || xs[xs.len() - cs.len()..] != *cs {
            return Err(Error::shape("add_broadcast_const", format!("{cs:?} onto {xs:?}")));
        }
        let block = addend.len();
        let mut out = self.value(x).clone();
        for chunk in out.data_mut().chunks_exact_mut(block) {
            for (o, a) in chunk.iter_mut().zip(addend.data()) {
                *o += a;
            }
        }
        Ok(self.push_op(out, &[x], |c| vec![Some(c.grad.clone())]))
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push_op(out, &[x], |c| vec![Some(c.grad.reshape(c.inputs[0].shape()).expect("reshape grad"))]))
    }

    pub fn permute(&self, x: Var, axes: &[usize]) -> Result<Var> {
        let out = self.value(x).permute(axes)?;
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        Ok(self.push_op(out, &[x], move |c| vec![Some(c.grad.permute(&inverse).expect("permute grad"))]))
    }

    /// Concatenates two tensors along their last axis.
    pub fn concat_last(&self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let r = sa.len();
        if r != sb.len() || sa[..r - 1] != sb[..r - 1] {
            return Err(Error::shape("concat_last", format!("{sa:?} vs {sb:?}")));
        }
        let (da, db) = (sa[r - 1], sb[r - 1]);
        let rows = self.value(a).len() / da;
        let mut data = Vec::with_capacity(rows * (da + db));
        {
            let (va, vb) = (self.value(a), self.value(b));
            for (ra, rb) in va.data().chunks_exact(da).zip(vb.data().chunks_exact(db)) {
                data.extend_from_slice(ra);
                data.extend_from_slice(rb);
            }
        }
        let mut shape = sa.clone();
        shape[r - 1] = da + db;
        let out = Tensor::from_parts(shape, data);
        Ok(self.push_op(out, &[a, b], move |c| {
            let mut ga = Vec::with_capacity(rows * da);
            let mut gb = Vec::with_capacity(rows * db);
            for row in c.grad.data().chunks_exact(da + db) {
                ga.extend_from_slice(&row[..da]);
                gb.extend_from_slice(&row[da..]);
            }
            vec![
                Some(Tensor::from_parts(c.inputs[0].shape().to_vec(), ga)),
                Some(Tensor::from_parts(c.inputs[1].shape().to_vec(), gb)),
            ]
        }))
    }

    pub fn sum(&self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push_op(out, &[x], |c| vec![Some(Tensor::full(c.inputs[0].shape(), c.grad.item()))])
    }

    pub fn mean(&self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).mean());
        self.push_op(out, &[x], |c| {
            let n = c.inputs[0].len() as f64;
            vec![Some(Tensor::full(c.inputs[0].shape(), c.grad.item() / n))]
        })
    }

    /// Mean of squared differences over all entries.
    pub fn mse(&self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape("mse", pred, target)?;
        let loss = {
            let (p, t) = (self.value(pred), self.value(target));
            p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64
        };
        Ok(self.push_op(Tensor::scalar(loss), &[pred, target], |c| {
            let k = 2.0 * c.grad.item() / c.inputs[0].len() as f64;
            let diff = c.inputs[0].zip_map(c.inputs[1], |a, b| k * (a - b));
            let neg = c.needs[1].then(|| diff.map(|d| -d));
            vec![Some(diff), neg]
        }))
    }
}

#[cfg(test)]
mod tests {
    use crate::numerics::{Graph, Mode, ParamStore};
    use crate::tensor::Tensor;

    #[test]
    fn sum_loss_gives_unit_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::from_fn(&[2, 3], |i| i as f64 - 2.5));
        let g = Graph::new(Mode::Train, 0);
        let x = g.param(&store, p);
        let loss = g.sum(x);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(p).grad, Tensor::ones(&[2, 3]));
    }

    #[test]
    fn sum_of_squares_gives_twice_the_value_and_accumulates() {
        let mut store = ParamStore::new();
        let init = Tensor::from_fn(&[4], |i| 0.5 * i as f64 - 1.0);
        let p = store.add("p", init.clone());
        let g = Graph::new(Mode::Train, 0);
        let x = g.param(&store, p);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(p).grad, init.map(|v| 2.0 * v));
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(p).grad, init.map(|v| 4.0 * v));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::ones(&[3]));
        let g = Graph::new(Mode::Train, 0);
        let x = g.param(&store, p);
        assert!(g.backward(x, &mut store).is_err());
    }

    #[test]
    fn shape_errors_are_reported() {
        let g = Graph::new(Mode::Eval, 0);
        let a = g.constant(Tensor::ones(&[2, 3]));
        let b = g.constant(Tensor::ones(&[3, 2]));
        assert!(g.add(a, b).is_err());
        assert!(g.concat_last(a, g.constant(Tensor::ones(&[3, 3]))).is_err());
        assert!(g.add_bias(a, g.constant(Tensor::ones(&[2]))).is_err());
    }

    #[test]
    fn concat_then_split_gradients() {
        let mut store = ParamStore::new();
        let pa = store.add("a", Tensor::from_fn(&[2, 2], |i| i as f64));
        let pb = store.add("b", Tensor::from_fn(&[2, 1], |i| 10.0 + i as f64));
        let g = Graph::new(Mode::Train, 0);
        let (a, b) = (g.param(&store, pa), g.param(&store, pb));
        let cat = g.concat_last(a, b).unwrap();
        assert_eq!(g.value(cat).data(), &[0.0, 1.0, 10.0, 2.0, 3.0, 11.0]);
        let w = g.constant(Tensor::from_fn(&[2, 3], |i| i as f64));
        let prod = g.mul(cat, w).unwrap();
        let loss = g.sum(prod);
        g.backward(loss, &mut store).unwrap();
        assert_eq!(store.get(pa).grad.data(), &[0.0, 1.0, 3.0, 4.0]);
        assert_eq!(store.get(pb).grad.data(), &[2.0, 5.0]);
    }
}
