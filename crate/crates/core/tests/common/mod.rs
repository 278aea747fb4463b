#![allow(dead_code)]

use mcmarg::rng::rng_substream;
use mcmarg::{sample_gmm, GmmModel, SampleBatch};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(stream: u64) -> ChaCha8Rng {
    rng_substream(0x5eed, stream)
}

/// Well-separated 2-D three-component mixture used by the recovery benchmark.
/// Every pair of means is at least 3 standard deviations apart along the
/// connecting line for both components.
pub fn benchmark_truth() -> GmmModel {
    GmmModel::from_moments(
        &[0.3, 0.3, 0.4],
        &[-3.0, 0.0, 3.0, 0.0, 0.0, 4.0],
        &[
            0.5, 0.2, 0.2, 0.4, //
            0.4, -0.15, -0.15, 0.6, //
            0.6, 0.0, 0.0, 0.3,
        ],
    )
    .unwrap()
}

/// Smallest separation, in the larger of the two projected standard
/// deviations, between any pair of component means.
pub fn min_separation(model: &GmmModel) -> f64 {
    let m = model.dim();
    let mut best = f64::INFINITY;
    for a in 0..model.components() {
        for b in a + 1..model.components() {
            let d: Vec<f64> = model.mean(a).iter().zip(model.mean(b)).map(|(x, y)| x - y).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            let u: Vec<f64> = d.iter().map(|v| v / norm).collect();
            let sd = |k: usize| {
                let c = model.covariance(k);
                let mut v = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        v += u[i] * c[i * m + j] * u[j];
                    }
                }
                v.sqrt()
            };
            best = best.min(norm / sd(a).max(sd(b)));
        }
    }
    best
}

/// Random mixture with log-scale factor diagonals in `[-0.5, 0.5]`, small
/// off-diagonals and logits drawn from `[-1, 1]`.
pub fn random_model<R: Rng>(rng: &mut R, dim: usize, components: usize) -> GmmModel {
    let logits = (0..components).map(|_| rng.random_range(-1.0..1.0)).collect();
    let means = (0..components * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut chol = vec![0.0; components * dim * dim];
    for block in chol.chunks_exact_mut(dim * dim) {
        for i in 0..dim {
            for j in 0..i {
                block[i * dim + j] = rng.random_range(-0.3..0.3);
            }
            block[i * dim + i] = rng.random_range(-0.5..0.5);
        }
    }
    GmmModel::from_parts(dim, logits, means, chol).unwrap()
}

pub fn draw(model: &GmmModel, count: usize, stream: u64) -> SampleBatch {
    sample_gmm(model, count, &mut rng(stream)).unwrap()
}

pub fn standard_normal(dim: usize) -> GmmModel {
    GmmModel::isotropic(&[1.0], &vec![0.0; dim], 1.0).unwrap()
}
