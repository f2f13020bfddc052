use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// One descent step. `grads[k]` must be shaped like `params[k]`.
    pub fn step(&mut self, params: &mut [&mut Matrix<T>], grads: &[Matrix<T>]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let t = self.step as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let (lr, eps) = (T::of(self.lr), T::of(self.eps));
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.shape(), g.shape(), "gradient shape for parameter {k}");
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for (((w, &gi), mi), vi) in p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
            {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut w = Matrix::from_vec(1, 2, vec![0.3, -1.2]).unwrap();
        let before = w.clone();
        let mut adam = AdamState::new(0.001);
        for _ in 0..5 {
            adam.step(&mut [&mut w], &[Matrix::zeros(1, 2)]);
        }
        assert_eq!(w, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [1e-3f64, 0.5, 40.0] {
            let mut w = Matrix::scalar(1.0);
            let mut adam = AdamState::new(0.001);
            adam.step(&mut [&mut w], &[Matrix::scalar(g)]);
            // m̂ = g, v̂ = g², update = lr·g/(|g|+ε)
            let expected = 0.001 * g / (g + 1e-8);
            assert!((1.0 - w.item() - expected).abs() < 1e-15, "g={g}");
        }
    }

    #[test]
    fn quadratic_descends_monotonically() {
        let mut w = Matrix::scalar(1.0f64);
        let mut adam = AdamState::new(0.001);
        let mut prev = 1.0;
        for step in 0..500 {
            let g = Matrix::scalar(2.0 * w.item());
            adam.step(&mut [&mut w], &[g]);
            if step > 10 {
                assert!(w.item().abs() < prev, "step {step}");
            }
            prev = w.item().abs();
        }
        assert!(w.item() < 0.6);
    }
}
