//! The Monte-Carlo marginalization loss and its analytic gradients.
//!
//! For one direction `u` the loss is the discretized KL between the kernel
//! density estimate of the projected samples (`q`) and the projected mixture
//! (`p`), both renormalized on a shared grid. Over a set of directions the
//! per-direction losses are averaged.
//!
//! Gradients treat the grid endpoints as constants. With respect to the model
//! the target `q` is constant; with respect to the samples the model side `p`
//! is constant.

use rand::Rng;
use rayon::prelude::*;

use crate::config::{Bandwidth, FitConfig};
use crate::error::{ensure_dim, Error, Result};
use crate::gmm::{marginalize, Marginal1DGmm};
use crate::grid::GridSpec;
use crate::model::{log_sum_exp, GmmModel};
use crate::projection::{
    grid_for, kde_raw, project, sample_unit_vector, silverman_from_std, sweep_kernel, GridRule,
};
use crate::types::{SampleBatch, UnitVector};

use super::kl::{kl_terms, KL_EPS};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gradient of the loss with respect to the model's unconstrained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradGmm {
    pub d_weight_logits: Vec<f64>,
    /// `K × M`, row-major.
    pub d_means: Vec<f64>,
    /// `K` row-major `M × M` blocks, zero above the diagonal; diagonal
    /// entries are with respect to `ln L_ii`.
    pub d_chol: Vec<f64>,
}

impl GradGmm {
    fn zeros(k: usize, m: usize) -> Self {
        Self { d_weight_logits: vec![0.0; k], d_means: vec![0.0; k * m], d_chol: vec![0.0; k * m * m] }
    }

    fn add_scaled(&mut self, other: &GradGmm, scale: f64) {
        let pairs = [
            (&mut self.d_weight_logits, &other.d_weight_logits),
            (&mut self.d_means, &other.d_means),
            (&mut self.d_chol, &other.d_chol),
        ];
        for (dst, src) in pairs {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
        }
    }

    /// Flattened in the layout of [`GmmModel::to_params`].
    pub fn to_flat(&self) -> Vec<f64> {
        let k = self.d_weight_logits.len();
        let m = self.d_means.len() / k;
        let mut flat = Vec::with_capacity(k + k * m + k * crate::model::tri_len(m));
        flat.extend_from_slice(&self.d_weight_logits);
        flat.extend_from_slice(&self.d_means);
        for block in self.d_chol.chunks_exact(m * m) {
            flat.extend(crate::model::pack_lower(block, m));
        }
        flat
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Grid and bandwidth settings shared by the loss and its gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub bandwidth: f64,
    pub grid_padding: f64,
    pub grid_bins: usize,
}

impl Objective {
    /// Resolves the configured bandwidth against the target samples.
    pub fn for_samples(config: &FitConfig, samples: &SampleBatch) -> Result<Self> {
        let bandwidth = match config.bandwidth {
            Bandwidth::Fixed(h) => h,
            Bandwidth::Silverman => {
                let cov = samples.covariance();
                silverman_from_std(mean_axis_std(&cov, samples.dim()), samples.count())?
            }
        };
        Ok(Self::with_bandwidth(config, bandwidth))
    }

    /// Resolves the configured bandwidth for `count` samples drawn from `model`.
    pub fn for_model(config: &FitConfig, model: &GmmModel, count: usize) -> Result<Self> {
        let bandwidth = match config.bandwidth {
            Bandwidth::Fixed(h) => h,
            Bandwidth::Silverman => {
                let cov = mixture_covariance(model);
                silverman_from_std(mean_axis_std(&cov, model.dim()), count)?
            }
        };
        Ok(Self::with_bandwidth(config, bandwidth))
    }

    pub fn with_bandwidth(config: &FitConfig, bandwidth: f64) -> Self {
        Self { bandwidth, grid_padding: config.grid_padding, grid_bins: config.grid_bins }
    }

    pub fn rule(&self) -> GridRule {
        GridRule { bandwidth: self.bandwidth, padding: self.grid_padding, bins: self.grid_bins }
    }
}

fn mean_axis_std(cov: &[f64], m: usize) -> f64 {
    ((0..m).map(|i| cov[i * m + i]).sum::<f64>() / m as f64).sqrt()
}

fn mixture_covariance(model: &GmmModel) -> Vec<f64> {
    let m = model.dim();
    let w = model.weights();
    let mut mean = vec![0.0; m];
    for (k, wk) in w.iter().enumerate() {
        mean.iter_mut().zip(model.mean(k)).for_each(|(a, b)| *a += wk * b);
    }
    let mut cov = vec![0.0; m * m];
    for (k, wk) in w.iter().enumerate() {
        let sigma = model.covariance(k);
        let mu = model.mean(k);
        for i in 0..m {
            for j in 0..m {
                cov[i * m + j] += wk * (sigma[i * m + j] + (mu[i] - mean[i]) * (mu[j] - mean[j]));
            }
        }
    }
    cov
}

/// Draws `count` directions sequentially from `rng`.
pub fn draw_directions<R: Rng + ?Sized>(rng: &mut R, count: usize, dim: usize) -> Result<Vec<UnitVector>> {
    (0..count).map(|_| sample_unit_vector(rng, dim)).collect()
}

/// Draws direction `d` of step `step` from its own substream, so the set is
/// independent of evaluation order.
pub fn keyed_directions(seed: u64, purpose: u64, step: u64, count: usize, dim: usize) -> Result<Vec<UnitVector>> {
    (0..count)
        .map(|d| sample_unit_vector(&mut crate::rng::substream(seed, purpose, step, d as u64), dim))
        .collect()
}

/// Monte-Carlo marginalization loss over `vectors_per_step` fresh directions
/// drawn from `rng`. Returns the loss and the directions used.
pub fn mcmarg_loss<R: Rng + ?Sized>(
    samples: &SampleBatch,
    model: &GmmModel,
    config: &FitConfig,
    rng: &mut R,
) -> Result<(f64, Vec<UnitVector>)> {
    config.validate()?;
    ensure_dim(model.dim(), samples.dim())?;
    let objective = Objective::for_samples(config, samples)?;
    let directions = draw_directions(rng, config.vectors_per_step, samples.dim())?;
    let loss = loss_with_directions(samples, model, &directions, &objective)?;
    Ok((loss, directions))
}

/// Mean over `directions` of the clamped per-direction KL, grids built by
/// [`grid_for`].
pub fn loss_with_directions(
    samples: &SampleBatch,
    model: &GmmModel,
    directions: &[UnitVector],
    objective: &Objective,
) -> Result<f64> {
    let per = per_direction_losses(samples, model, directions, objective)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Clamped KL for each direction, in order.
pub fn per_direction_losses(
    samples: &SampleBatch,
    model: &GmmModel,
    directions: &[UnitVector],
    objective: &Objective,
) -> Result<Vec<f64>> {
    check_inputs(samples, model, directions)?;
    directions
        .par_iter()
        .map(|u| DirectionEval::new(samples, model, u, None, objective).map(|e| e.loss.max(0.0)))
        .collect()
}

/// The grid each direction would use at the current samples and model.
pub fn direction_grids(
    samples: &SampleBatch,
    model: &GmmModel,
    directions: &[UnitVector],
    objective: &Objective,
) -> Result<Vec<GridSpec>> {
    check_inputs(samples, model, directions)?;
    directions
        .iter()
        .map(|u| {
            let s = project(samples, u)?;
            let marginal = marginalize(model, u)?;
            grid_for(&s, Some(&marginal), &objective.rule())
        })
        .collect()
}

/// Unclamped mean loss on caller-fixed grids. This is the smooth function the
/// gradients differentiate.
pub fn loss_on_grids(
    samples: &SampleBatch,
    model: &GmmModel,
    directions: &[UnitVector],
    grids: &[GridSpec],
    objective: &Objective,
) -> Result<f64> {
    check_inputs(samples, model, directions)?;
    ensure_dim(directions.len(), grids.len())?;
    let per: Vec<f64> = directions
        .par_iter()
        .zip(grids)
        .map(|(u, g)| DirectionEval::new(samples, model, u, Some(*g), objective).map(|e| e.loss))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Exact gradient of the loss with respect to the model parameters.
pub fn grad_wrt_model(
    samples: &SampleBatch,
    model: &GmmModel,
    directions: &[UnitVector],
    objective: &Objective,
) -> Result<GradGmm> {
    loss_and_grad_model(samples, model, directions, objective).map(|(_, g)| g)
}

/// Exact gradient of the loss with respect to every sample coordinate,
/// row-major `N × M`.
pub fn grad_wrt_samples(
    samples: &SampleBatch,
    model: &GmmModel,
    directions: &[UnitVector],
    objective: &Objective,
) -> Result<Vec<f64>> {
    loss_and_grad_samples(samples, model, directions, objective).map(|(_, g)| g)
}

/// Mean clamped loss and model gradient in one pass.
pub fn loss_and_grad_model(
    samples: &SampleBatch,
    model: &GmmModel,
    directions: &[UnitVector],
    objective: &Objective,
) -> Result<(f64, GradGmm)> {
    check_inputs(samples, model, directions)?;
    let per: Vec<(f64, GradGmm)> = directions
        .par_iter()
        .map(|u| {
            let eval = DirectionEval::new(samples, model, u, None, objective)?;
            let grad = eval.model_gradient(model, u);
            Ok((eval.loss.max(0.0), grad))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / directions.len() as f64;
    let mut total = GradGmm::zeros(model.components(), model.dim());
    let mut loss = 0.0;
    for (l, g) in &per {
        loss += l;
        total.add_scaled(g, scale);
    }
    Ok((loss * scale, total))
}

/// Mean clamped loss and sample gradient in one pass.
pub fn loss_and_grad_samples(
    samples: &SampleBatch,
    model: &GmmModel,
    directions: &[UnitVector],
    objective: &Objective,
) -> Result<(f64, Vec<f64>)> {
    check_inputs(samples, model, directions)?;
    let per: Vec<(f64, Vec<f64>)> = directions
        .par_iter()
        .map(|u| {
            let eval = DirectionEval::new(samples, model, u, None, objective)?;
            Ok((eval.loss.max(0.0), eval.projection_gradient()))
        })
        .collect::<Result<_>>()?;
    let m = samples.dim();
    let scale = 1.0 / directions.len() as f64;
    let mut grad = vec![0.0; samples.count() * m];
    let mut loss = 0.0;
    for ((l, ds), u) in per.iter().zip(directions) {
        loss += l;
        for (row, d) in grad.chunks_exact_mut(m).zip(ds) {
            row.iter_mut().zip(u.as_slice()).for_each(|(g, ui)| *g += scale * d * ui);
        }
    }
    Ok((loss * scale, grad))
}

fn check_inputs(samples: &SampleBatch, model: &GmmModel, directions: &[UnitVector]) -> Result<()> {
    ensure_dim(model.dim(), samples.dim())?;
    if directions.is_empty() {
        return Err(Error::invalid("at least one direction is required"));
    }
    for u in directions {
        ensure_dim(samples.dim(), u.dim())?;
    }
    Ok(())
}

/// Everything computed for one direction on one grid.
struct DirectionEval {
    grid: GridSpec,
    bandwidth: f64,
    projections: Vec<f64>,
    marginal: Marginal1DGmm,
    q: Vec<f64>,
    mass_q: f64,
    p: Vec<f64>,
    /// Per cell and component, `ln w_k + ln N(x_i; m_k, v_k) − ln a_i`.
    log_resp: Vec<f64>,
    loss: f64,
}

impl DirectionEval {
    fn new(
        samples: &SampleBatch,
        model: &GmmModel,
        u: &UnitVector,
        grid: Option<GridSpec>,
        objective: &Objective,
    ) -> Result<Self> {
        let projections = project(samples, u)?;
        let marginal = marginalize(model, u)?;
        let grid = match grid {
            Some(g) => g,
            None => grid_for(&projections, Some(&marginal), &objective.rule())?,
        };
        let dx = grid.width();

        let mut q = kde_raw(&projections, objective.bandwidth, &grid)?;
        let mass_q = q.iter().sum::<f64>() * dx;
        if mass_q.is_nan() || mass_q <= 0.0 {
            return Err(Error::Numerical("sample density estimate vanishes on the grid".into()));
        }
        q.iter_mut().for_each(|v| *v /= mass_q);

        let k = marginal.components();
        let lw = marginal.log_weights();
        let mut log_resp = vec![0.0; grid.bins * k];
        let mut p = Vec::with_capacity(grid.bins);
        for (i, x) in grid.centers().enumerate() {
            let terms = &mut log_resp[i * k..(i + 1) * k];
            marginal.component_log_terms(&lw, x, terms);
            let la = log_sum_exp(terms);
            terms.iter_mut().for_each(|t| *t -= la);
            p.push(la.exp());
        }
        let mass_p = p.iter().sum::<f64>() * dx;
        if !(mass_p > 0.0 && mass_p.is_finite()) {
            return Err(Error::Numerical("model marginal vanishes on the grid".into()));
        }
        p.iter_mut().for_each(|v| *v /= mass_p);

        let loss = kl_terms(q.iter().copied(), p.iter().copied(), dx);
        if !loss.is_finite() {
            return Err(Error::Numerical("non-finite KL".into()));
        }
        Ok(Self {
            grid,
            bandwidth: objective.bandwidth,
            projections,
            marginal,
            q,
            mass_q,
            p,
            log_resp,
            loss,
        })
    }

    fn model_gradient(&self, model: &GmmModel, u: &UnitVector) -> GradGmm {
        let dx = self.grid.width();
        let k = self.marginal.components();
        let dim = model.dim();

        // dL/dp_i and the renormalization correction; c_i = a_i · dL/da_i.
        let gp: Vec<f64> = self.q.iter().zip(&self.p).map(|(q, p)| -dx * q / (p + KL_EPS)).collect();
        let s: f64 = gp.iter().zip(&self.p).map(|(g, p)| g * p).sum();

        let mut d_logw = vec![0.0; k];
        let mut d_mean = vec![0.0; k];
        let mut d_var = vec![0.0; k];
        let means = self.marginal.means();
        let vars = self.marginal.variances();
        for (i, x) in self.grid.centers().enumerate() {
            let c = (gp[i] - dx * s) * self.p[i];
            if c == 0.0 {
                continue;
            }
            for j in 0..k {
                let cr = c * self.log_resp[i * k + j].exp();
                let d = x - means[j];
                d_logw[j] += cr;
                d_mean[j] += cr * d / vars[j];
                d_var[j] += cr * 0.5 * (d * d / vars[j] - 1.0) / vars[j];
            }
        }

        let w = self.marginal.weights();
        let total: f64 = d_logw.iter().sum();
        let mut grad = GradGmm::zeros(k, dim);
        for j in 0..k {
            grad.d_weight_logits[j] = d_logw[j] - w[j] * total;
            let uu = u.as_slice();
            grad.d_means[j * dim..(j + 1) * dim]
                .iter_mut()
                .zip(uu)
                .for_each(|(g, ui)| *g = d_mean[j] * ui);
            // v = ‖Lᵀu‖², dv/dL_ab = 2 u_a (Lᵀu)_b for a >= b
            let l = model.chol_factor(j);
            let y: Vec<f64> = (0..dim).map(|b| (b..dim).map(|a| l[a * dim + b] * uu[a]).sum()).collect();
            let block = &mut grad.d_chol[j * dim * dim..(j + 1) * dim * dim];
            for a in 0..dim {
                for b in 0..=a {
                    let mut g = d_var[j] * 2.0 * uu[a] * y[b];
                    if a == b {
                        g *= l[a * dim + a];
                    }
                    block[a * dim + b] = g;
                }
            }
        }
        grad
    }

    /// dL/ds_n for every projected sample.
    fn projection_gradient(&self) -> Vec<f64> {
        let dx = self.grid.width();
        let gq: Vec<f64> = self
            .q
            .iter()
            .zip(&self.p)
            .map(|(&q, &p)| dx * ((q + KL_EPS).ln() - (p + KL_EPS).ln() + q / (q + KL_EPS)))
            .collect();
        let mean_gq: f64 = gq.iter().zip(&self.q).map(|(g, q)| g * q).sum();
        let e: Vec<f64> = gq.iter().map(|g| (g - dx * mean_gq) / self.mass_q).collect();
        let h = self.bandwidth;
        let scale = INV_SQRT_2PI / (self.projections.len() as f64 * h * h);
        self.projections
            .iter()
            .map(|&s| {
                let mut acc = 0.0;
                sweep_kernel(&self.grid, s, h, |i, t, k| acc += e[i] * k * t);
                acc * scale
            })
            .collect()
    }
}

