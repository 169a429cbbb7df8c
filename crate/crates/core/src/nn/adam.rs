use super::{Gradients, Network, NnError};
use crate::scalar::Real;

/// Adam with bias correction and a learning rate that moves linearly from
/// `lr_start` to `lr_end` over `total_steps` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr_start: f64,
    pub lr_end: f64,
    pub total_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: usize,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(lr_start: f64, lr_end: f64, total_steps: usize) -> Self {
        Self {
            lr_start,
            lr_end,
            total_steps,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn constant(lr: f64) -> Self {
        Self::new(lr, lr, 1)
    }

    /// Learning rate of the next update.
    pub fn current_lr(&self) -> f64 {
        if self.total_steps == 0 {
            return self.lr_start;
        }
        let frac = (self.step_count as f64 / self.total_steps as f64).min(1.0);
        self.lr_start + (self.lr_end - self.lr_start) * frac
    }

    /// One update of `params` in place.
    pub fn step(&mut self, mut params: Vec<&mut [T]>, grads: &[Vec<T>]) -> Result<(), NnError> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(NnError::ShapeMismatch("parameter/gradient shapes differ".into()));
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != grads.len() || self.first.iter().zip(grads).any(|(m, g)| m.len() != g.len()) {
            return Err(NnError::ShapeMismatch("moment buffers do not match gradients".into()));
        }
        let lr = self.current_lr();
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(t));
        let c2 = T::lit(1.0 - self.beta2.powi(t));
        let (lr, eps) = (T::lit(lr), T::lit(self.epsilon));
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Updates every parameter of `net`.
    pub fn step_network(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> Result<(), NnError> {
        self.step(net.params_mut(), &grads.tensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut adam = AdamState::<f64>::constant(0.1);
        let mut w = vec![1.0, -2.0];
        for _ in 0..10 {
            adam.step(vec![&mut w], &[vec![0.0, 0.0]]).unwrap();
        }
        assert_eq!(w, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [1e-3, 0.5, -20.0] {
            let mut adam = AdamState::<f64>::constant(0.01);
            let mut w = vec![0.0];
            adam.step(vec![&mut w], &[vec![g]]).unwrap();
            assert!((w[0].abs() - 0.01).abs() < 1e-6, "g={g}: {}", w[0]);
        }
    }

    #[test]
    fn quadratic_converges() {
        // f(w) = w^2, gradient 2w
        let mut adam = AdamState::<f64>::constant(0.1);
        let mut w = vec![1.0];
        for _ in 0..200 {
            let g = vec![2.0 * w[0]];
            adam.step(vec![&mut w], &[g]).unwrap();
        }
        assert!(w[0].abs() < 1e-2, "w = {}", w[0]);
    }

    #[test]
    fn linear_schedule() {
        let mut adam = AdamState::<f64>::new(1e-4, 1e-5, 10);
        assert_eq!(adam.current_lr(), 1e-4);
        let mut w = vec![0.0];
        for _ in 0..5 {
            adam.step(vec![&mut w], &[vec![1.0]]).unwrap();
        }
        assert!((adam.current_lr() - 5.5e-5).abs() < 1e-18);
        for _ in 0..10 {
            adam.step(vec![&mut w], &[vec![1.0]]).unwrap();
        }
        assert!((adam.current_lr() - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn shape_mismatch() {
        let mut adam = AdamState::<f64>::constant(0.1);
        let mut w = vec![0.0, 1.0];
        assert!(adam.step(vec![&mut w], &[vec![1.0]]).is_err());
    }
}
