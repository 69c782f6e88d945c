use super::TrainConfig;
use crate::error::{Error, Result};
use crate::tensor::ParamStore;

/// Bias-corrected Adam over the trainable entries of a parameter store.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, params: &ParamStore) -> Adam {
        let zeros = || params.entries().iter().map(|e| vec![0.0f32; e.value.numel()]).collect::<Vec<_>>();
        Adam { lr: cfg.learning_rate, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.eps, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients accumulated in `params`.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Shape(format!("optimiser tracks {} tensors, store has {}", self.m.len(), params.len())));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let lr = self.lr;
        for ((e, m), v) in params.entries_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !e.trainable {
                continue;
            }
            if e.grad.len() != m.len() {
                return Err(Error::Shape(format!(
                    "gradient of `{}` has {} values, parameter has {}",
                    e.name,
                    e.grad.len(),
                    m.len()
                )));
            }
            let values = e.value.data_mut();
            for i in 0..m.len() {
                let g = e.grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let mhat = m[i] as f64 / c1;
                let vhat = v[i] as f64 / c2;
                values[i] -= (lr * mhat / (vhat.sqrt() + self.eps)) as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_store(x: f32) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::new(vec![1], vec![x]).unwrap(), true).unwrap();
        s
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = TrainConfig::default();
        let mut store = scalar_store(0.5);
        let mut adam = Adam::new(&cfg, &store);
        store.entries_mut()[0].grad[0] = 1.0;
        adam.step(&mut store).unwrap();
        // m_hat = g and v_hat = g^2 after bias correction
        let expect = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((store.entries()[0].value.data()[0] as f64 - expect).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let cfg = TrainConfig::default();
        let mut store = scalar_store(0.25);
        let mut adam = Adam::new(&cfg, &store);
        for _ in 0..5 {
            adam.step(&mut store).unwrap();
        }
        assert_eq!(store.entries()[0].value.data()[0], 0.25);
    }

    #[test]
    fn minimises_a_parabola() {
        // large enough to get within 0.1 in 100 steps, small enough not to overshoot 0
        let cfg = TrainConfig { learning_rate: 0.015, ..Default::default() };
        let mut store = scalar_store(1.0);
        let mut adam = Adam::new(&cfg, &store);
        let mut last = f32::INFINITY;
        for _ in 0..100 {
            let x = store.entries()[0].value.data()[0];
            assert!(x * x < last);
            last = x * x;
            store.entries_mut()[0].grad[0] = 2.0 * x;
            adam.step(&mut store).unwrap();
        }
        assert!(store.entries()[0].value.data()[0].abs() < 0.1);
    }

    #[test]
    fn frozen_entries_are_untouched() {
        let cfg = TrainConfig::default();
        let mut store = scalar_store(1.0);
        store.add("buffer", Tensor::new(vec![1], vec![3.0]).unwrap(), false).unwrap();
        let mut adam = Adam::new(&cfg, &store);
        store.entries_mut()[1].grad = vec![];
        adam.step(&mut store).unwrap();
        assert_eq!(store.entries()[1].value.data()[0], 3.0);
    }
}
