use super::param::ParamStore;
use crate::tensor::Tensor;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently held in `store`.
    pub fn step(&mut self, store: &mut ParamStore) {
        assert_eq!(self.m.len(), store.len(), "optimizer state does not match parameter store");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in store.params_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (w, g) = (p.value.data_mut(), p.grad.data());
            for (((w, &g), m), v) in w.iter_mut().zip(g).zip(m.data_mut()).zip(v.data_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(value: Tensor, grad: Tensor) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", value);
        s.get_mut(id).grad = grad;
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let init = Tensor::from_fn(&[5], |i| i as f64 - 2.0);
        let mut s = store_with(init.clone(), Tensor::zeros(&[5]));
        let mut opt = Adam::new(&s, 0.1);
        for _ in 0..3 {
            opt.step(&mut s);
        }
        assert_eq!(s.params()[0].value, init);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let grad = Tensor::new(vec![4], vec![3.0, -0.02, 1e3, -7.0]).unwrap();
        let mut s = store_with(Tensor::zeros(&[4]), grad.clone());
        let mut opt = Adam::new(&s, 1e-3);
        opt.step(&mut s);
        // m_hat = g and v_hat = g^2 after one step, so the move is lr * g / (|g| + eps).
        for (w, g) in s.params()[0].value.data().iter().zip(grad.data()) {
            let want = -1e-3 * g / (g.abs() + 1e-8);
            assert!((w - want).abs() < 1e-15);
            assert!((w + 1e-3 * g.signum()).abs() < 1e-9);
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        // Scalar reference simulation of the same recurrence.
        let (mut w_ref, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let g = 2.0 * w_ref;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            w_ref -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
        }
        let mut s = store_with(Tensor::scalar(1.0), Tensor::scalar(0.0));
        let mut opt = Adam::new(&s, 0.1);
        for _ in 0..200 {
            let w = s.params()[0].value.item();
            s.params_mut()[0].grad = Tensor::scalar(2.0 * w);
            opt.step(&mut s);
        }
        let w = s.params()[0].value.item();
        assert!(w.abs() < 1e-2, "{w}");
        assert!((w - w_ref).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_is_bit_identical() {
        let init = Tensor::from_fn(&[7], |i| (i as f64).sqrt() - 1.1);
        let mut s = store_with(init.clone(), Tensor::from_fn(&[7], |i| i as f64 * 0.3 - 1.0));
        let mut opt = Adam::new(&s, 0.0);
        for _ in 0..50 {
            opt.step(&mut s);
        }
        assert_eq!(s.params()[0].value, init);
    }
}
