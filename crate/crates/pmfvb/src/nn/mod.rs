//! Bayesian MLP regression/classification with particle mean-field
//! updates for the weights and analytic Inverse-Gamma factors.

mod factors;
mod joint;
mod metrics;
mod mlp;
mod step;
mod train;

pub use factors::{
    logq_w, logq_w_grad, update_q_sigma2_nn, update_q_tau, NnPrior, VariationalFactors,
};
pub use joint::NnJointTarget;
pub use metrics::{metrics, predict, Metrics};
pub use mlp::{loglik_term, mlp_backward, MlpModel, Task};
pub use step::{pmfvb_nn_step, AdaptiveDriftState, DriftHyper};
pub use train::{
    run_nn_baseline, run_pmfvb_nn, BaselineConfig, BaselineFit, BaselineMethod, NnDataset, NnFit,
    NnTrainConfig,
};
