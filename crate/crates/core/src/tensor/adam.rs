use alloc::vec::Vec;

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Adam with bias correction and optional L2 weight decay (added to the
/// gradient before the moment updates).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<DenseMatrix>,
    pub second_moment: Vec<DenseMatrix>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)], learning_rate: f64) -> Self {
        Self {
            first_moment: shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect(),
            second_moment: shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect(),
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    /// Applies one update in place. Nothing is modified when a gradient is
    /// non-finite or a shape disagrees.
    pub fn step(&mut self, params: &mut [&mut DenseMatrix], grads: &[&DenseMatrix]) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::contract("learning rate must be positive"));
        }
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::dim("adam_step", "parameter, gradient and moment counts differ"));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::dim("adam_step", "parameter and gradient shapes differ"));
            }
            if !g.is_finite() {
                return Err(Error::Numeric { op: "adam_step" });
            }
        }

        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - libm::pow(self.beta1, t);
        let bc2 = 1.0 - libm::pow(self.beta2, t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                let grad = g.data()[k] + self.weight_decay * *w;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * grad;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * grad * grad;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *w -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::scalar_matrix;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_matrix(1.0);
        let g = scalar_matrix(1.0);
        let mut adam = AdamState::new(&[(1, 1)], 0.01);
        adam.step(&mut [&mut p], &[&g]).unwrap();
        // m_hat / sqrt(v_hat) = 1 on the first step
        assert!((p.data()[0] - (1.0 - 0.01 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = DenseMatrix::from_rows(&[[0.3, -2.0]]).unwrap();
        let before = p.clone();
        let mut adam = AdamState::new(&[(1, 2)], 0.1);
        adam.step(&mut [&mut p], &[&DenseMatrix::zeros(1, 2)]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn repeated_steps_follow_reference() {
        // scalar reference: m, v recursions with bias correction
        let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
        let grad = 0.4;
        let mut w_ref = 2.0;
        let (mut m, mut v) = (0.0, 0.0);
        let mut p = scalar_matrix(2.0);
        let mut adam = AdamState::new(&[(1, 1)], lr);
        let mut prev = 2.0;
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * grad;
            v = b2 * v + (1.0 - b2) * grad * grad;
            let mh = m / (1.0 - f64::powi(b1, t));
            let vh = v / (1.0 - f64::powi(b2, t));
            w_ref -= lr * mh / (vh.sqrt() + eps);
            adam.step(&mut [&mut p], &[&scalar_matrix(grad)]).unwrap();
            assert!((p.data()[0] - w_ref).abs() < 1e-14);
            assert!(p.data()[0] < prev);
            prev = p.data()[0];
        }
    }

    #[test]
    fn non_finite_gradient_aborts_step() {
        let mut p = scalar_matrix(1.0);
        let mut adam = AdamState::new(&[(1, 1)], 0.01);
        let err = adam.step(&mut [&mut p], &[&scalar_matrix(f64::NAN)]);
        assert!(matches!(err, Err(Error::Numeric { .. })));
        assert_eq!(p.data()[0], 1.0);
        assert_eq!(adam.step_count, 0);
    }
}
