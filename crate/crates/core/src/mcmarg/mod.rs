//! Monte-Carlo marginalization: the sliced KL objective, its gradients with
//! respect to both the mixture and the samples, and the fitting loops built on
//! them.

mod adam;
mod fit;
mod kl;
mod objective;

pub use adam::{AdamParams, AdamState};
pub use fit::{fit_gmm, fit_samples, fit_samples_with, init_model, init_samples};
pub use kl::{kl_1d, KL_EPS};
pub use objective::{
    direction_grids, draw_directions, grad_wrt_model, grad_wrt_samples, keyed_directions,
    loss_and_grad_model, loss_and_grad_samples, loss_on_grids, loss_with_directions, mcmarg_loss,
    per_direction_losses, GradGmm, Objective,
};
