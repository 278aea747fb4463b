//! Quantitative comparisons between samples and fitted mixtures.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::FitConfig;
use crate::error::{ensure_dim, Error, Result};
use crate::gmm::{marginal_density_on_grid, marginalize, DensityEvaluator};
use crate::grid::GridSpec;
use crate::mcmarg::{keyed_directions, kl_1d, per_direction_losses, Objective, KL_EPS};
use crate::model::GmmModel;
use crate::projection::{grid_for, sweep_kernel, GridRule};
use crate::rng::purpose;
use crate::types::{SampleBatch, UnitVector};

/// Axis-aligned evaluation box in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2D {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Box2D {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Result<Self> {
        let ok = [x_lo, x_hi, y_lo, y_hi].iter().all(|v| v.is_finite()) && x_hi > x_lo && y_hi > y_lo;
        if !ok {
            return Err(Error::invalid("box needs finite lo < hi on both axes"));
        }
        Ok(Self { x_lo, x_hi, y_lo, y_hi })
    }

    /// Smallest box holding every component of `model` out to `reach`
    /// standard deviations per axis.
    pub fn around_model(model: &GmmModel, reach: f64) -> Result<Self> {
        ensure_dim(2, model.dim())?;
        (0..model.components())
            .map(|k| {
                let mu = model.mean(k);
                let cov = model.covariance(k);
                let (sx, sy) = (reach * cov[0].sqrt(), reach * cov[3].sqrt());
                Self { x_lo: mu[0] - sx, x_hi: mu[0] + sx, y_lo: mu[1] - sy, y_hi: mu[1] + sy }
            })
            .reduce(|a, b| a.union(&b))
            .ok_or_else(|| Error::invalid("model has no components"))
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            x_lo: self.x_lo.min(other.x_lo),
            x_hi: self.x_hi.max(other.x_hi),
            y_lo: self.y_lo.min(other.y_lo),
            y_hi: self.y_hi.max(other.y_hi),
        }
    }

    pub fn x_grid(&self, bins: usize) -> Result<GridSpec> {
        GridSpec::new(self.x_lo, self.x_hi, bins)
    }

    pub fn y_grid(&self, bins: usize) -> Result<GridSpec> {
        GridSpec::new(self.y_lo, self.y_hi, bins)
    }
}

/// Evaluates `density` at the `bins × bins` cell centers of `bounds`,
/// x-major (`values[ix * bins + iy]`).
pub fn density_on_box<F>(density: F, bounds: &Box2D, bins: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let gx = bounds.x_grid(bins)?;
    let gy = bounds.y_grid(bins)?;
    let values: Vec<f64> = (0..bins)
        .into_par_iter()
        .flat_map_iter(|ix| {
            let x = gx.center(ix);
            let density = &density;
            gy.centers().map(move |y| density(&[x, y]))
        })
        .collect();
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite("2-D density values".into()));
    }
    Ok(values)
}

/// Forward KL `D(q ‖ p)` on a `bins × bins` grid over `bounds`, each density
/// renormalized to unit mass on the grid, with the usual `ε` floor.
pub fn grid_kl_2d<Q, P>(q_density: Q, p_density: P, bounds: &Box2D, bins: usize) -> Result<f64>
where
    Q: Fn(&[f64]) -> f64 + Sync,
    P: Fn(&[f64]) -> f64 + Sync,
{
    if bins < 2 {
        return Err(Error::invalid("bins_per_axis must be >= 2"));
    }
    let q = density_on_box(q_density, bounds, bins)?;
    let p = density_on_box(p_density, bounds, bins)?;
    let area = (bounds.x_hi - bounds.x_lo) * (bounds.y_hi - bounds.y_lo) / (bins * bins) as f64;
    grid_kl_values(&q, &p, area)
}

/// KL between two densities already tabulated on the same cells.
pub fn grid_kl_values(q: &[f64], p: &[f64], cell_area: f64) -> Result<f64> {
    ensure_dim(q.len(), p.len())?;
    let zq = q.iter().sum::<f64>() * cell_area;
    let zp = p.iter().sum::<f64>() * cell_area;
    if !(zq > 0.0 && zp > 0.0 && zq.is_finite() && zp.is_finite()) {
        return Err(Error::Numerical("2-D density has no mass on the box".into()));
    }
    let kl: f64 = q
        .iter()
        .zip(p)
        .map(|(&qi, &pi)| {
            let (qn, pn) = (qi / zq, pi / zp);
            qn * ((qn + KL_EPS).ln() - (pn + KL_EPS).ln())
        })
        .sum::<f64>()
        * cell_area;
    Ok(kl.max(0.0))
}

/// Product-kernel density estimate of 2-D samples at the cell centers of
/// `bounds`, x-major like [`density_on_box`].
pub fn kde_2d_on_box(samples: &SampleBatch, bandwidth: f64, bounds: &Box2D, bins: usize) -> Result<Vec<f64>> {
    ensure_dim(2, samples.dim())?;
    if bandwidth.is_nan() || bandwidth <= 0.0 {
        return Err(Error::invalid("bandwidth must be > 0"));
    }
    let gx = bounds.x_grid(bins)?;
    let gy = bounds.y_grid(bins)?;
    let mut values = vec![0.0; bins * bins];
    let mut wy: Vec<(usize, f64)> = Vec::new();
    for z in samples.rows() {
        wy.clear();
        sweep_kernel(&gy, z[1], bandwidth, |iy, _, k| wy.push((iy, k)));
        sweep_kernel(&gx, z[0], bandwidth, |ix, _, kx| {
            let row = &mut values[ix * bins..(ix + 1) * bins];
            for &(iy, ky) in &wy {
                row[iy] += kx * ky;
            }
        });
    }
    let norm = 1.0 / (samples.count() as f64 * 2.0 * std::f64::consts::PI * bandwidth * bandwidth);
    values.iter_mut().for_each(|v| *v *= norm);
    Ok(values)
}

/// Mean and standard error of the per-direction KL between the projected
/// samples' density estimate and the model marginal, over `directions` fresh
/// random directions. Grids follow the fitting defaults.
pub fn sliced_kl_eval(
    samples: &SampleBatch,
    model: &GmmModel,
    directions: usize,
    bandwidth: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if directions < 2 {
        return Err(Error::invalid("sliced KL evaluation needs at least 2 directions"));
    }
    ensure_dim(model.dim(), samples.dim())?;
    let defaults = FitConfig::default();
    let objective = Objective { bandwidth, grid_padding: defaults.grid_padding, grid_bins: defaults.grid_bins };
    let dirs = keyed_directions(seed, purpose::EVAL_DIRECTIONS, 0, directions, samples.dim())?;
    let per = per_direction_losses(samples, model, &dirs, &objective)?;
    Ok(mean_and_stderr(&per))
}

/// Mean per-sample log-density under the model, in nats.
pub fn holdout_loglik(model: &GmmModel, samples: &SampleBatch) -> Result<f64> {
    ensure_dim(model.dim(), samples.dim())?;
    let eval = DensityEvaluator::new(model);
    let total: f64 = samples.rows().map(|z| eval.log_density(z)).sum();
    Ok(total / samples.count() as f64)
}

/// KL between the exact marginals of two mixtures along `u`.
pub fn model_marginal_kl(q: &GmmModel, p: &GmmModel, u: &UnitVector, bins: usize) -> Result<f64> {
    ensure_dim(q.dim(), p.dim())?;
    let mq = marginalize(q, u)?;
    let mp = marginalize(p, u)?;
    let rule = GridRule { bandwidth: 0.1, padding: 0.0, bins };
    let gq = grid_for(&[], Some(&mq), &rule)?;
    let gp = grid_for(&[], Some(&mp), &rule)?;
    let grid = GridSpec::new(gq.lo.min(gp.lo), gq.hi.max(gp.hi), bins)?;
    kl_1d(&marginal_density_on_grid(&mq, &grid)?, &marginal_density_on_grid(&mp, &grid)?)
}

/// Mean and standard error of [`model_marginal_kl`] over random directions.
pub fn sliced_kl_models(q: &GmmModel, p: &GmmModel, directions: usize, seed: u64, bins: usize) -> Result<(f64, f64)> {
    if directions < 2 {
        return Err(Error::invalid("sliced KL evaluation needs at least 2 directions"));
    }
    let dirs = keyed_directions(seed, purpose::EVAL_DIRECTIONS, 1, directions, q.dim())?;
    let per: Vec<f64> = dirs.iter().map(|u| model_marginal_kl(q, p, u, bins)).collect::<Result<_>>()?;
    Ok(mean_and_stderr(&per))
}

pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Flat metric map plus free-form metadata, serialized as the evaluation
/// report.
#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, f64>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{gmm_density, sample_gmm};
    use crate::rng::rng_substream;

    fn std2() -> GmmModel {
        GmmModel::isotropic(&[1.0], &[0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn grid_kl_examples() {
        let a = std2();
        let b = a.translated(&[1.0, 0.0]).unwrap();
        let bx = Box2D::new(-8.0, 9.0, -8.0, 8.0).unwrap();
        let da = |z: &[f64]| gmm_density(&a, z).unwrap();
        let db = |z: &[f64]| gmm_density(&b, z).unwrap();
        assert_eq!(grid_kl_2d(da, da, &bx, 100).unwrap(), 0.0);
        let kl400 = grid_kl_2d(da, db, &bx, 400).unwrap();
        assert!((kl400 - 0.5).abs() < 0.01, "{kl400}");
        let kl200 = grid_kl_2d(da, db, &bx, 200).unwrap();
        assert!((kl200 - kl400).abs() < 5e-3);
        assert!(grid_kl_2d(|_: &[f64]| f64::NAN, da, &bx, 10).is_err());
    }

    #[test]
    fn loglik_examples() {
        let g = std2();
        let at_mode = SampleBatch::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let ll = holdout_loglik(&g, &at_mode).unwrap();
        assert!((ll + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);

        let big = sample_gmm(&g, 200_000, &mut rng_substream(8, 0)).unwrap();
        let ll = holdout_loglik(&g, &big).unwrap();
        let neg_entropy = -(1.0 + (2.0 * std::f64::consts::PI).ln());
        assert!((ll - neg_entropy).abs() < 0.03, "{ll}");

        let far = SampleBatch::from_rows(&[vec![1e3, -1e3]]).unwrap();
        assert!(holdout_loglik(&g, &far).unwrap().is_finite());
    }

    #[test]
    fn sliced_eval_self_consistency_and_mismatch() {
        let g = std2();
        let s = sample_gmm(&g, 10_000, &mut rng_substream(3, 0)).unwrap();
        let (mean, se) = sliced_kl_eval(&s, &g, 64, 0.1, 7).unwrap();
        assert!(mean < 0.02 && se >= 0.0, "{mean}");
        let shifted = g.translated(&[5.0, 5.0]).unwrap();
        let (bad, _) = sliced_kl_eval(&s, &shifted, 64, 0.1, 7).unwrap();
        assert!(bad > 1.0, "{bad}");
        assert_eq!(sliced_kl_eval(&s, &g, 64, 0.1, 7).unwrap(), (mean, se));
        assert!(sliced_kl_eval(&s, &g, 1, 0.1, 7).is_err());
    }

    #[test]
    fn kde_2d_matches_direct_sum() {
        let s = SampleBatch::from_rows(&[vec![0.1, -0.3], vec![0.5, 0.2], vec![-0.7, 0.9]]).unwrap();
        let bx = Box2D::new(-2.0, 2.0, -2.0, 2.0).unwrap();
        let h = 0.3;
        let v = kde_2d_on_box(&s, h, &bx, 40).unwrap();
        let gx = bx.x_grid(40).unwrap();
        let gy = bx.y_grid(40).unwrap();
        for ix in (0..40).step_by(7) {
            for iy in (0..40).step_by(5) {
                let (x, y) = (gx.center(ix), gy.center(iy));
                let direct: f64 = s
                    .rows()
                    .map(|z| {
                        let r2 = ((x - z[0]).powi(2) + (y - z[1]).powi(2)) / (h * h);
                        (-0.5 * r2).exp() / (2.0 * std::f64::consts::PI * h * h * 3.0)
                    })
                    .sum();
                assert!((v[ix * 40 + iy] - direct).abs() < 1e-12 * (1.0 + direct));
            }
        }
    }
}
