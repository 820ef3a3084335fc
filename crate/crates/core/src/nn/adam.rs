use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for every parameter in a store.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step_count: u64,
    config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Result<Self> {
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            epsilon,
        } = config;
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::param("Adam betas must lie in [0, 1)"));
        }
        if !(epsilon > 0.0) || !(alpha > 0.0) {
            return Err(Error::param("Adam alpha and epsilon must be positive"));
        }
        let zeros = |_: &crate::nn::Param<T>| -> Vec<T> { Vec::new() };
        let mut first: Vec<Vec<T>> = store.iter().map(zeros).collect();
        let mut second = first.clone();
        for (i, p) in store.iter().enumerate() {
            if p.trainable {
                first[i] = vec![T::zero(); p.value.len()];
                second[i] = vec![T::zero(); p.value.len()];
            }
        }
        Ok(AdamState {
            first,
            second,
            step_count: 0,
            config,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// Applies one update from the gradients currently in `store`.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let b1 = T::of(self.config.beta1);
        let b2 = T::of(self.config.beta2);
        let alpha = T::of(self.config.alpha);
        let eps = T::of(self.config.epsilon);
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        for (i, p) in store.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (((w, &g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (T::one() - b1) * g;
                *vi = b2 * *vi + (T::one() - b2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
