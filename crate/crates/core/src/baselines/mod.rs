//! Reference points for the gradient fit: EM, evaluation metrics, and
//! synthetic targets.

pub mod em;
pub mod metrics;
pub mod targets;

pub use em::em_fit;
pub use metrics::{
    grid_kl_2d, holdout_loglik, kde_2d_on_box, model_marginal_kl, sliced_kl_eval, sliced_kl_models, Box2D,
    EvalReport,
};
pub use targets::{make_target, random_gmm, Target};
