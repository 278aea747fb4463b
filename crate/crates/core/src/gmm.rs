//! Mixture density evaluation, sampling, and exact projection onto a
//! direction.

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::grid::{DensityGrid1D, GridSpec};
use crate::model::{log_sum_exp, GmmModel};
use crate::types::{SampleBatch, UnitVector};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// The 1-D mixture obtained by projecting a [`GmmModel`] onto a direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal1DGmm {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl Marginal1DGmm {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("marginal needs at least one component"));
        }
        ensure_dim(weights.len(), means.len())?;
        ensure_dim(weights.len(), variances.len())?;
        ensure_finite(&weights, "marginal weights")?;
        ensure_finite(&means, "marginal means")?;
        ensure_finite(&variances, "marginal variances")?;
        if weights.iter().any(|&w| w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("marginal weights must be a probability vector"));
        }
        if variances.iter().any(|&v| v <= 0.0) {
            return Err(Error::invalid("marginal variances must be positive"));
        }
        Ok(Self { weights, means, variances })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Per-component `ln w_k + ln N(x; m_k, v_k)` written into `out`.
    pub(crate) fn component_log_terms(&self, log_weights: &[f64], x: f64, out: &mut [f64]) {
        for k in 0..self.weights.len() {
            let v = self.variances[k];
            let d = x - self.means[k];
            out[k] = log_weights[k] - 0.5 * (LN_2PI + v.ln()) - 0.5 * d * d / v;
        }
    }

    pub(crate) fn log_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.ln()).collect()
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let lw = self.log_weights();
        let mut terms = vec![0.0; self.components()];
        self.component_log_terms(&lw, x, &mut terms);
        log_sum_exp(&terms)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    /// Mixture density at every grid center, before renormalization.
    pub fn raw_on_grid(&self, grid: &GridSpec) -> Vec<f64> {
        let lw = self.log_weights();
        let mut terms = vec![0.0; self.components()];
        grid.centers()
            .map(|x| {
                self.component_log_terms(&lw, x, &mut terms);
                log_sum_exp(&terms).exp()
            })
            .collect()
    }
}

/// Evaluates `ln p(z; θ)` for a fixed model without re-deriving the factors on
/// every call.
#[derive(Debug, Clone)]
pub struct DensityEvaluator {
    dim: usize,
    log_weights: Vec<f64>,
    means: Vec<f64>,
    factors: Vec<Vec<f64>>,
    /// `ln w_k − (M/2) ln 2π − ln det L_k`.
    offsets: Vec<f64>,
}

impl DensityEvaluator {
    pub fn new(model: &GmmModel) -> Self {
        let dim = model.dim();
        let log_weights = model.log_weights();
        let offsets = (0..model.components())
            .map(|k| log_weights[k] - 0.5 * dim as f64 * LN_2PI - model.half_log_det(k))
            .collect();
        Self {
            dim,
            log_weights,
            means: model.means().to_vec(),
            factors: (0..model.components()).map(|k| model.chol_factor(k)).collect(),
            offsets,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-component log terms `ln w_k + ln N(z; μ_k, Σ_k)`.
    pub fn component_log_terms(&self, z: &[f64], out: &mut [f64]) {
        let m = self.dim;
        let mut y = vec![0.0; m];
        for (k, l) in self.factors.iter().enumerate() {
            let mu = &self.means[k * m..(k + 1) * m];
            // forward substitution L y = z − μ
            let mut quad = 0.0;
            for i in 0..m {
                let mut acc = z[i] - mu[i];
                for j in 0..i {
                    acc -= l[i * m + j] * y[j];
                }
                y[i] = acc / l[i * m + i];
                quad += y[i] * y[i];
            }
            out[k] = self.offsets[k] - 0.5 * quad;
        }
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        let mut terms = vec![0.0; self.log_weights.len()];
        self.component_log_terms(z, &mut terms);
        log_sum_exp(&terms)
    }
}

pub fn gmm_log_density(model: &GmmModel, z: &[f64]) -> Result<f64> {
    ensure_dim(model.dim(), z.len())?;
    ensure_finite(z, "density argument")?;
    Ok(DensityEvaluator::new(model).log_density(z))
}

pub fn gmm_density(model: &GmmModel, z: &[f64]) -> Result<f64> {
    gmm_log_density(model, z).map(f64::exp)
}

/// Exact marginal of the mixture along `u`: weights unchanged, means
/// `μ_k · u`, variances `‖L_kᵀ u‖²`.
pub fn marginalize(model: &GmmModel, u: &UnitVector) -> Result<Marginal1DGmm> {
    ensure_dim(model.dim(), u.dim())?;
    let k = model.components();
    let means = (0..k).map(|c| u.dot(model.mean(c))).collect();
    let variances = (0..k).map(|c| projected_variance(model, c, u.as_slice())).collect();
    Marginal1DGmm::new(model.weights(), means, variances)
}

/// `‖L_kᵀ u‖²`.
pub(crate) fn projected_variance(model: &GmmModel, k: usize, u: &[f64]) -> f64 {
    let m = model.dim();
    let l = model.chol_factor(k);
    (0..m)
        .map(|j| {
            let y: f64 = (j..m).map(|i| l[i * m + j] * u[i]).sum();
            y * y
        })
        .sum()
}

/// Marginal mixture density on the grid, renormalized to unit mass.
pub fn marginal_density_on_grid(marginal: &Marginal1DGmm, grid: &GridSpec) -> Result<DensityGrid1D> {
    DensityGrid1D::normalized(*grid, marginal.raw_on_grid(grid))
}

/// Draws `count` samples: a component by weight, then `μ_k + L_k ξ`.
pub fn sample_gmm<R: Rng + ?Sized>(model: &GmmModel, count: usize, rng: &mut R) -> Result<SampleBatch> {
    sample_gmm_labeled(model, count, rng).map(|(batch, _)| batch)
}

/// Like [`sample_gmm`], also returning the component each sample came from.
pub fn sample_gmm_labeled<R: Rng + ?Sized>(
    model: &GmmModel,
    count: usize,
    rng: &mut R,
) -> Result<(SampleBatch, Vec<usize>)> {
    if count == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let m = model.dim();
    let picker = WeightedIndex::new(model.weights())
        .map_err(|e| Error::Numerical(format!("mixture weights: {e}")))?;
    let factors: Vec<Vec<f64>> = (0..model.components()).map(|k| model.chol_factor(k)).collect();
    let mut data = Vec::with_capacity(count * m);
    let mut labels = Vec::with_capacity(count);
    let mut xi = vec![0.0; m];
    for _ in 0..count {
        let k = picker.sample(rng);
        xi.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        let l = &factors[k];
        let mu = model.mean(k);
        for i in 0..m {
            let lx: f64 = (0..=i).map(|j| l[i * m + j] * xi[j]).sum();
            data.push(mu[i] + lx);
        }
        labels.push(k);
    }
    Ok((SampleBatch::new(data, count, m)?, labels))
}
