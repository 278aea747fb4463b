//! Fit Gaussian mixture models to samples of an unknown distribution by
//! minimizing KL divergences between 1-D marginals along random directions.
//!
//! The sample side of each marginal is a Gaussian kernel density estimate of
//! the projected samples; the model side is the exact projection of the
//! mixture. Both the mixture parameters and the samples themselves can be
//! optimized, since the loss has analytic gradients in both.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod gmm;
pub mod grid;
pub mod io;
pub mod mcmarg;
pub mod model;
pub mod projection;
pub mod rng;
pub mod types;

pub use config::{Bandwidth, FitConfig, FitReport};
pub use error::{Error, ErrorKind, Result};
pub use gmm::{gmm_density, gmm_log_density, marginalize, sample_gmm, Marginal1DGmm};
pub use grid::{DensityGrid1D, GridSpec};
pub use model::GmmModel;
pub use types::{SampleBatch, UnitVector};
