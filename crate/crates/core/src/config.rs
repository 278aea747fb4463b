//! Fitting configuration and the report a fit produces.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::GmmModel;

/// Kernel bandwidth for the projected-sample density estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// `1.06 · σ̂ · N^(-1/5)`, resolved once per fit from the sample batch
    /// (σ̂² is the mean per-axis variance, i.e. the average projected variance
    /// over uniformly random directions).
    Silverman,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub components: usize,
    pub steps: usize,
    pub vectors_per_step: usize,
    pub learning_rate: f64,
    pub bandwidth: Bandwidth,
    pub grid_bins: usize,
    /// Sample-side grid padding, in multiples of the bandwidth.
    pub grid_padding: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            components: 3,
            steps: 3000,
            vectors_per_step: 16,
            learning_rate: 0.01,
            bandwidth: Bandwidth::Fixed(0.1),
            grid_bins: 512,
            grid_padding: 4.0,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::invalid(msg)) };
        check(self.components >= 1, "components must be >= 1")?;
        check(self.vectors_per_step >= 1, "vectors_per_step must be >= 1")?;
        check(self.grid_bins >= 2, "grid_bins must be >= 2")?;
        check(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning_rate must be > 0",
        )?;
        if let Bandwidth::Fixed(h) = self.bandwidth {
            check(h > 0.0 && h.is_finite(), "bandwidth must be > 0")?;
        }
        check(
            self.grid_padding >= 0.0 && self.grid_padding.is_finite(),
            "grid_padding must be >= 0",
        )?;
        check((0.0..1.0).contains(&self.adam_beta1), "adam_beta1 must be in [0, 1)")?;
        check((0.0..1.0).contains(&self.adam_beta2), "adam_beta2 must be in [0, 1)")?;
        check(self.adam_epsilon > 0.0, "adam_epsilon must be > 0")
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: GmmModel,
    pub loss_trajectory: Vec<f64>,
    pub wall_time: f64,
    pub seed: u64,
    pub bandwidth: f64,
    pub metrics: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        FitConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            FitConfig { components: 0, ..Default::default() },
            FitConfig { vectors_per_step: 0, ..Default::default() },
            FitConfig { learning_rate: 0.0, ..Default::default() },
            FitConfig { bandwidth: Bandwidth::Fixed(-0.1), ..Default::default() },
            FitConfig { adam_beta1: 1.0, ..Default::default() },
            FitConfig { grid_bins: 1, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
