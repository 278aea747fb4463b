//! The Gaussian mixture parameterization that the optimizer works on.
//!
//! Weights live in logit space and each covariance is stored as a lower
//! triangular Cholesky factor whose diagonal holds logarithms, so any finite
//! parameter vector is a valid mixture.

use nalgebra::DMatrix;

use crate::error::{ensure_dim, ensure_finite, Error, Result};

/// Smallest diagonal entry a Cholesky factor may take after an optimizer step.
pub const MIN_CHOL_DIAG: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    dim: usize,
    weight_logits: Vec<f64>,
    /// `K × M`, row-major.
    means: Vec<f64>,
    /// `K` blocks of `M × M`, row-major, strictly upper part zero, diagonal
    /// stored as `ln L_ii`.
    chol: Vec<f64>,
}

impl GmmModel {
    /// Builds a model straight from its unconstrained parameters. `chol` holds
    /// `K` row-major `M × M` blocks; entries above the diagonal must be zero
    /// and diagonal entries are log-scale.
    pub fn from_parts(
        dim: usize,
        weight_logits: Vec<f64>,
        means: Vec<f64>,
        chol: Vec<f64>,
    ) -> Result<Self> {
        let k = weight_logits.len();
        if dim == 0 || k == 0 {
            return Err(Error::invalid("mixture needs dim >= 1 and at least one component"));
        }
        ensure_dim(k * dim, means.len())?;
        ensure_dim(k * dim * dim, chol.len())?;
        ensure_finite(&weight_logits, "weight logits")?;
        ensure_finite(&means, "means")?;
        ensure_finite(&chol, "cholesky factors")?;
        for block in chol.chunks_exact(dim * dim) {
            for i in 0..dim {
                for j in i + 1..dim {
                    if block[i * dim + j] != 0.0 {
                        return Err(Error::invalid("cholesky factor has nonzero upper entries"));
                    }
                }
            }
        }
        let mut model = Self { dim, weight_logits, means, chol };
        model.clamp_chol_diag();
        Ok(model)
    }

    /// Builds a model from probability weights, means (`K × M`) and full
    /// covariances (`K` row-major `M × M` blocks).
    pub fn from_moments(weights: &[f64], means: &[f64], covariances: &[f64]) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if !means.len().is_multiple_of(k) {
            return Err(Error::invalid("means length is not a multiple of the component count"));
        }
        let dim = means.len() / k;
        ensure_dim(k * dim * dim, covariances.len())?;
        ensure_finite(weights, "weights")?;
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights must not all be zero"));
        }
        let logits = weights
            .iter()
            .map(|&w| (w / total).max(f64::MIN_POSITIVE).ln())
            .collect();
        let mut chol = Vec::with_capacity(k * dim * dim);
        for cov in covariances.chunks_exact(dim * dim) {
            chol.extend(cholesky_log_diag(cov, dim)?);
        }
        Self::from_parts(dim, logits, means.to_vec(), chol)
    }

    /// Every component gets covariance `variance · I`.
    pub fn isotropic(weights: &[f64], means: &[f64], variance: f64) -> Result<Self> {
        let k = weights.len().max(1);
        let dim = means.len() / k;
        let mut covs = vec![0.0; weights.len() * dim * dim];
        for block in covs.chunks_exact_mut(dim * dim) {
            (0..dim).for_each(|i| block[i * dim + i] = variance);
        }
        Self::from_moments(weights, means, &covs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.weight_logits.len()
    }

    pub fn weight_logits(&self) -> &[f64] {
        &self.weight_logits
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.weight_logits)
    }

    pub fn log_weights(&self) -> Vec<f64> {
        log_softmax(&self.weight_logits)
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    /// Raw factor block of component `k` (log-scale diagonal).
    pub fn chol_raw(&self, k: usize) -> &[f64] {
        let b = self.dim * self.dim;
        &self.chol[k * b..(k + 1) * b]
    }

    /// `L_k` with the diagonal exponentiated.
    pub fn chol_factor(&self, k: usize) -> Vec<f64> {
        let mut l = self.chol_raw(k).to_vec();
        (0..self.dim).for_each(|i| {
            let d = i * self.dim + i;
            l[d] = l[d].exp();
        });
        l
    }

    /// `Σ_k = L_k L_kᵀ`, row-major.
    pub fn covariance(&self, k: usize) -> Vec<f64> {
        let m = self.dim;
        let l = self.chol_factor(k);
        let mut cov = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let v: f64 = (0..=j).map(|t| l[i * m + t] * l[j * m + t]).sum();
                cov[i * m + j] = v;
                cov[j * m + i] = v;
            }
        }
        cov
    }

    /// `Σ_k ln L_k,ii`, i.e. half the log-determinant of `Σ_k`.
    pub fn half_log_det(&self, k: usize) -> f64 {
        let raw = self.chol_raw(k);
        (0..self.dim).map(|i| raw[i * self.dim + i]).sum()
    }

    pub fn with_means(&self, means: Vec<f64>) -> Result<Self> {
        Self::from_parts(self.dim, self.weight_logits.clone(), means, self.chol.clone())
    }

    /// Same mixture shifted by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        ensure_dim(self.dim, shift.len())?;
        let means = self
            .means
            .chunks_exact(self.dim)
            .flat_map(|mu| mu.iter().zip(shift).map(|(a, b)| a + b))
            .collect();
        self.with_means(means)
    }

    /// Number of free parameters: `K` logits, `K·M` means and `K·M(M+1)/2`
    /// factor entries.
    pub fn param_len(&self) -> usize {
        let k = self.components();
        k + k * self.dim + k * tri_len(self.dim)
    }

    /// Flattens the parameters as `[logits | means | packed lower factors]`.
    pub fn to_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_len());
        p.extend_from_slice(&self.weight_logits);
        p.extend_from_slice(&self.means);
        for k in 0..self.components() {
            p.extend(pack_lower(self.chol_raw(k), self.dim));
        }
        p
    }

    /// Inverse of [`to_params`](Self::to_params), followed by the diagonal clamp.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        ensure_dim(self.param_len(), params.len())?;
        ensure_finite(params, "model parameters")?;
        let k = self.components();
        let m = self.dim;
        let (logits, rest) = params.split_at(k);
        let (means, packed) = rest.split_at(k * m);
        self.weight_logits.copy_from_slice(logits);
        self.means.copy_from_slice(means);
        for (c, tri) in packed.chunks_exact(tri_len(m)).enumerate() {
            let block = &mut self.chol[c * m * m..(c + 1) * m * m];
            unpack_lower(tri, m, block);
        }
        self.clamp_chol_diag();
        Ok(())
    }

    /// Raises every factor diagonal to at least [`MIN_CHOL_DIAG`].
    pub fn clamp_chol_diag(&mut self) {
        let floor = MIN_CHOL_DIAG.ln();
        let m = self.dim;
        for block in self.chol.chunks_exact_mut(m * m) {
            (0..m).for_each(|i| {
                let d = &mut block[i * m + i];
                if *d < floor {
                    *d = floor;
                }
            });
        }
    }
}

pub(crate) fn tri_len(m: usize) -> usize {
    m * (m + 1) / 2
}

pub(crate) fn pack_lower(block: &[f64], m: usize) -> impl Iterator<Item = f64> + '_ {
    (0..m).flat_map(move |i| (0..=i).map(move |j| block[i * m + j]))
}

fn unpack_lower(tri: &[f64], m: usize, block: &mut [f64]) {
    let mut t = 0;
    for i in 0..m {
        for j in 0..=i {
            block[i * m + j] = tri[t];
            t += 1;
        }
    }
}

/// Cholesky factor of a row-major SPD matrix with the diagonal replaced by its
/// logarithm.
pub(crate) fn cholesky_log_diag(cov: &[f64], m: usize) -> Result<Vec<f64>> {
    ensure_finite(cov, "covariance")?;
    let scale = (0..m).map(|i| cov[i * m + i].abs()).fold(0.0, f64::max).max(1.0);
    for i in 0..m {
        for j in 0..i {
            if (cov[i * m + j] - cov[j * m + i]).abs() > 1e-9 * scale {
                return Err(Error::invalid("covariance is not symmetric"));
            }
        }
    }
    let chol = DMatrix::from_row_slice(m, m, cov)
        .cholesky()
        .ok_or_else(|| Error::invalid("covariance is not positive definite"))?;
    let l = chol.l();
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            out[i * m + j] = if i == j { l[(i, i)].ln() } else { l[(i, j)] };
        }
    }
    Ok(out)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&a| (a - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&a| a - lse).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}
