//! The two fitting loops: model from samples, and samples from a model.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;

use crate::config::{FitConfig, FitReport};
use crate::error::{ensure_dim, Error, Result};
use crate::model::GmmModel;
use crate::rng::{purpose, substream};
use crate::types::SampleBatch;

use super::adam::{AdamParams, AdamState};
use super::objective::{keyed_directions, loss_and_grad_model, loss_and_grad_samples, Objective};

/// Starting mixture: means at `K` distinct samples, every factor the square
/// root of the per-axis sample variance shrunk by `K^(1/M)`, uniform weights.
pub fn init_model<R: Rng + ?Sized>(samples: &SampleBatch, components: usize, rng: &mut R) -> Result<GmmModel> {
    let n = samples.count();
    let m = samples.dim();
    if components == 0 {
        return Err(Error::invalid("components must be >= 1"));
    }
    if n < components {
        return Err(Error::TooFewSamples { needed: components, found: n });
    }
    let picks = rand::seq::index::sample(rng, n, components);
    let mut means = Vec::with_capacity(components * m);
    for idx in picks.iter() {
        means.extend_from_slice(samples.row(idx));
    }
    let cov = samples.covariance();
    let shrink = (components as f64).ln() / m as f64;
    let mut block = vec![0.0; m * m];
    for i in 0..m {
        block[i * m + i] = 0.5 * cov[i * m + i].max(1e-300).ln() - shrink;
    }
    let chol = block.repeat(components);
    GmmModel::from_parts(m, vec![0.0; components], means, chol)
}

/// Fits a `config.components`-component mixture to `samples` by Adam on the
/// Monte-Carlo marginalization loss, drawing fresh directions every step.
pub fn fit_gmm(samples: &SampleBatch, config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    let start = Instant::now();
    let objective = Objective::for_samples(config, samples)?;
    let mut model = init_model(
        samples,
        config.components,
        &mut substream(config.seed, purpose::MODEL_INIT, 0, 0),
    )?;
    let hp = AdamParams::from(config);
    let mut adam = AdamState::new(model.param_len());
    let mut trajectory = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let directions = keyed_directions(
            config.seed,
            purpose::FIT_DIRECTIONS,
            step as u64,
            config.vectors_per_step,
            samples.dim(),
        )?;
        let (loss, grad) = loss_and_grad_model(samples, &model, &directions, &objective)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at step {step}")));
        }
        trajectory.push(loss);
        let mut params = model.to_params();
        adam.step(&mut params, &grad.to_flat(), &hp)
            .map_err(|e| Error::Numerical(format!("step {step}: {e}")))?;
        model.set_params(&params)?;
    }
    let mut metrics = BTreeMap::new();
    if let Some(last) = trajectory.last() {
        metrics.insert("final_loss".to_string(), *last);
        let tail = &trajectory[trajectory.len().saturating_sub(100)..];
        metrics.insert("trailing_mean_loss".to_string(), tail.iter().sum::<f64>() / tail.len() as f64);
    }
    Ok(FitReport {
        model,
        loss_trajectory: trajectory,
        wall_time: start.elapsed().as_secs_f64(),
        seed: config.seed,
        bandwidth: objective.bandwidth,
        metrics,
    })
}

/// Moves `count` samples, started uniformly in the model's mean bounding box
/// inflated by three times its largest per-axis standard deviation, toward
/// the model. Returns the final samples and the loss before every step.
pub fn fit_samples(model: &GmmModel, count: usize, config: &FitConfig) -> Result<(SampleBatch, Vec<f64>)> {
    fit_samples_with(model, count, config, |_, _| {})
}

/// [`fit_samples`] with `observe(step, samples)` called before each update and
/// once more with `step == config.steps` on the final samples.
pub fn fit_samples_with(
    model: &GmmModel,
    count: usize,
    config: &FitConfig,
    mut observe: impl FnMut(usize, &SampleBatch),
) -> Result<(SampleBatch, Vec<f64>)> {
    config.validate()?;
    if count == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let objective = Objective::for_model(config, model, count)?;
    let mut samples = init_samples(model, count, &mut substream(config.seed, purpose::SAMPLE_INIT, 0, 0))?;
    let hp = AdamParams::from(config);
    let mut adam = AdamState::new(count * model.dim());
    let mut trajectory = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        observe(step, &samples);
        let directions = keyed_directions(
            config.seed,
            purpose::SAMPLE_DIRECTIONS,
            step as u64,
            config.vectors_per_step,
            model.dim(),
        )?;
        let (loss, grad) = loss_and_grad_samples(&samples, model, &directions, &objective)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at step {step}")));
        }
        trajectory.push(loss);
        let mut data = samples.into_vec();
        adam.step(&mut data, &grad, &hp)
            .map_err(|e| Error::Numerical(format!("step {step}: {e}")))?;
        samples = SampleBatch::new(data, count, model.dim())?;
    }
    observe(config.steps, &samples);
    Ok((samples, trajectory))
}

/// Uniform draws over the inflated mean bounding box used by [`fit_samples`].
pub fn init_samples<R: Rng + ?Sized>(model: &GmmModel, count: usize, rng: &mut R) -> Result<SampleBatch> {
    let m = model.dim();
    let k = model.components();
    let max_sigma = (0..k)
        .flat_map(|c| {
            let cov = model.covariance(c);
            (0..m).map(move |i| cov[i * m + i].sqrt())
        })
        .fold(0.0, f64::max);
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for c in 0..k {
        for (i, &mu) in model.mean(c).iter().enumerate() {
            lo[i] = lo[i].min(mu - 3.0 * max_sigma);
            hi[i] = hi[i].max(mu + 3.0 * max_sigma);
        }
    }
    ensure_dim(m, lo.len())?;
    let mut data = Vec::with_capacity(count * m);
    for _ in 0..count {
        for i in 0..m {
            data.push(lo[i] + (hi[i] - lo[i]) * rng.random::<f64>());
        }
    }
    SampleBatch::new(data, count, m)
}
