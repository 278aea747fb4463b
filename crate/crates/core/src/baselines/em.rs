//! Classic expectation-maximization for full-covariance mixtures.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gmm::DensityEvaluator;
use crate::mcmarg::init_model;
use crate::model::{log_sum_exp, GmmModel};
use crate::types::SampleBatch;

/// Components whose total responsibility falls below this are restarted.
pub const MIN_COMPONENT_MASS: f64 = 1e-10;

/// Ridge added to every covariance, relative to the mean per-axis data
/// variance.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// Runs `iterations` EM updates from the same starting point as the gradient
/// fit. Returns the model and the mean log-likelihood after each update.
pub fn em_fit<R: Rng + ?Sized>(
    samples: &SampleBatch,
    components: usize,
    iterations: usize,
    rng: &mut R,
) -> Result<(GmmModel, Vec<f64>)> {
    if iterations == 0 {
        return Err(Error::invalid("iterations must be >= 1"));
    }
    let mut model = init_model(samples, components, rng)?;
    let m = samples.dim();
    let data_cov = samples.covariance();
    let scale = (0..m).map(|i| data_cov[i * m + i]).sum::<f64>() / m as f64;
    let ridge = COVARIANCE_RIDGE * if scale > 0.0 { scale } else { 1.0 };
    let init_cov: Vec<f64> = (0..components).flat_map(|k| model.covariance(k)).collect();

    let mut resp = vec![0.0; samples.count() * components];
    e_step(&model, samples, &mut resp);
    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        model = m_step(samples, &resp, components, ridge, &init_cov, rng)?;
        trace.push(e_step(&model, samples, &mut resp));
    }
    Ok((model, trace))
}

/// Fills `resp` (`N × K`) with posterior component probabilities and returns
/// the mean log-likelihood.
fn e_step(model: &GmmModel, samples: &SampleBatch, resp: &mut [f64]) -> f64 {
    let k = model.components();
    let eval = DensityEvaluator::new(model);
    let mut total = 0.0;
    for (z, r) in samples.rows().zip(resp.chunks_exact_mut(k)) {
        eval.component_log_terms(z, r);
        let ll = log_sum_exp(r);
        r.iter_mut().for_each(|v| *v = (*v - ll).exp());
        total += ll;
    }
    total / samples.count() as f64
}

fn m_step<R: Rng + ?Sized>(
    samples: &SampleBatch,
    resp: &[f64],
    k: usize,
    ridge: f64,
    init_cov: &[f64],
    rng: &mut R,
) -> Result<GmmModel> {
    let m = samples.dim();
    let n = samples.count();
    let mut mass = vec![0.0; k];
    let mut means = vec![0.0; k * m];
    for (z, r) in samples.rows().zip(resp.chunks_exact(k)) {
        for c in 0..k {
            mass[c] += r[c];
            means[c * m..(c + 1) * m].iter_mut().zip(z).for_each(|(a, x)| *a += r[c] * x);
        }
    }
    let mut covs = vec![0.0; k * m * m];
    for c in 0..k {
        if mass[c] < MIN_COMPONENT_MASS {
            continue;
        }
        means[c * m..(c + 1) * m].iter_mut().for_each(|a| *a /= mass[c]);
    }
    for (z, r) in samples.rows().zip(resp.chunks_exact(k)) {
        for c in 0..k {
            if mass[c] < MIN_COMPONENT_MASS {
                continue;
            }
            let mu = &means[c * m..(c + 1) * m];
            let cov = &mut covs[c * m * m..(c + 1) * m * m];
            for i in 0..m {
                let di = z[i] - mu[i];
                for j in 0..=i {
                    cov[i * m + j] += r[c] * di * (z[j] - mu[j]);
                }
            }
        }
    }
    for c in 0..k {
        let cov = &mut covs[c * m * m..(c + 1) * m * m];
        if mass[c] < MIN_COMPONENT_MASS {
            // restart the component on a random sample
            let idx = rng.random_range(0..n);
            means[c * m..(c + 1) * m].copy_from_slice(samples.row(idx));
            cov.copy_from_slice(&init_cov[c * m * m..(c + 1) * m * m]);
            mass[c] = n as f64 / k as f64;
            continue;
        }
        for i in 0..m {
            for j in 0..=i {
                let v = cov[i * m + j] / mass[c];
                cov[i * m + j] = v;
                cov[j * m + i] = v;
            }
            cov[i * m + i] += ridge;
        }
    }
    GmmModel::from_moments(&mass, &means, &covs)
        .map_err(|e| Error::Numerical(format!("EM produced an invalid mixture: {e}")))
}
