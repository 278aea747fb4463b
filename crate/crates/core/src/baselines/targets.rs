//! Synthetic 2-D target distributions for comparing fitting methods.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::gmm::sample_gmm;
use crate::model::GmmModel;
use crate::types::SampleBatch;

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Points on a circle with Gaussian radial noise.
    Ring { radius: f64, noise: f64 },
    /// Archimedean spiral from radius 0.5 to 4 with isotropic noise.
    Spiral { turns: f64, noise: f64 },
    /// Two interleaved half circles, scaled by 2 and centered.
    TwoMoons { noise: f64 },
    UniformSquare { center: [f64; 2], side: f64 },
    /// A fresh mixture with 4 to 16 components, drawn from the same stream.
    RandomGmm,
}

impl Target {
    pub const NAMES: [&'static str; 5] = ["ring", "spiral", "two_moons", "uniform_square", "random_gmm"];
}

impl FromStr for Target {
    type Err = Error;

    /// Parses a target name with its default parameters.
    fn from_str(name: &str) -> Result<Self> {
        match name {
            "ring" => Ok(Target::Ring { radius: 3.0, noise: 0.1 }),
            "spiral" => Ok(Target::Spiral { turns: 2.0, noise: 0.1 }),
            "two_moons" => Ok(Target::TwoMoons { noise: 0.1 }),
            "uniform_square" => Ok(Target::UniformSquare { center: [0.0, 0.0], side: 4.0 }),
            "random_gmm" => Ok(Target::RandomGmm),
            other => Err(Error::invalid(format!(
                "unknown target '{other}' (expected one of {})",
                Target::NAMES.join(", ")
            ))),
        }
    }
}

pub fn make_target<R: Rng + ?Sized>(target: &Target, count: usize, rng: &mut R) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if let Target::RandomGmm = target {
        let model = random_gmm(rng)?;
        return sample_gmm(&model, count, rng);
    }
    let mut data = Vec::with_capacity(2 * count);
    for i in 0..count {
        let (x, y) = match *target {
            Target::Ring { radius, noise } => {
                let angle = 2.0 * PI * rng.random::<f64>();
                let r = radius + noise * rng.sample::<f64, _>(StandardNormal);
                (r * angle.cos(), r * angle.sin())
            }
            Target::Spiral { turns, noise } => {
                let t = rng.random::<f64>();
                let angle = 2.0 * PI * turns * t;
                let r = 0.5 + 3.5 * t;
                (
                    r * angle.cos() + noise * rng.sample::<f64, _>(StandardNormal),
                    r * angle.sin() + noise * rng.sample::<f64, _>(StandardNormal),
                )
            }
            Target::TwoMoons { noise } => {
                let angle = PI * rng.random::<f64>();
                let (bx, by) = if i % 2 == 0 {
                    (angle.cos(), angle.sin())
                } else {
                    (1.0 - angle.cos(), 0.5 - angle.sin())
                };
                (
                    2.0 * (bx - 0.5) + noise * rng.sample::<f64, _>(StandardNormal),
                    2.0 * (by - 0.25) + noise * rng.sample::<f64, _>(StandardNormal),
                )
            }
            Target::UniformSquare { center, side } => (
                center[0] + side * (rng.random::<f64>() - 0.5),
                center[1] + side * (rng.random::<f64>() - 0.5),
            ),
            Target::RandomGmm => unreachable!(),
        };
        data.push(x);
        data.push(y);
    }
    SampleBatch::new(data, count, 2)
}

/// Random planar mixture: 4–16 components, means uniform in `[−5, 5]²`,
/// covariances `0.15·AAᵀ + 0.05·I` with standard normal `A`, Dirichlet(1)
/// weights.
pub fn random_gmm<R: Rng + ?Sized>(rng: &mut R) -> Result<GmmModel> {
    let k = rng.random_range(4..=16usize);
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(2 * k);
    let mut covs = Vec::with_capacity(4 * k);
    for _ in 0..k {
        weights.push(rng.sample::<f64, _>(Exp1));
        means.push(rng.random_range(-5.0..5.0));
        means.push(rng.random_range(-5.0..5.0));
        let a: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let c00 = 0.15 * (a[0] * a[0] + a[1] * a[1]) + 0.05;
        let c01 = 0.15 * (a[0] * a[2] + a[1] * a[3]);
        let c11 = 0.15 * (a[2] * a[2] + a[3] * a[3]) + 0.05;
        covs.extend_from_slice(&[c00, c01, c01, c11]);
    }
    GmmModel::from_moments(&weights, &means, &covs)
}
