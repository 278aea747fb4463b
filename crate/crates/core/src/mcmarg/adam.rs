use crate::config::FitConfig;
use crate::error::{ensure_dim, ensure_finite, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl From<&FitConfig> for AdamParams {
    fn from(c: &FitConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            beta1: c.adam_beta1,
            beta2: c.adam_beta2,
            epsilon: c.adam_epsilon,
        }
    }
}

/// First and second moment accumulators for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { first: vec![0.0; len], second: vec![0.0; len], step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place. Non-finite
    /// gradients are rejected before anything is modified.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], hp: &AdamParams) -> Result<()> {
        ensure_dim(self.first.len(), params.len())?;
        ensure_dim(self.first.len(), grads.len())?;
        ensure_finite(grads, "gradient")?;
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - hp.beta1.powi(t);
        let bias2 = 1.0 - hp.beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
            *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
        }
        Ok(())
    }
}
