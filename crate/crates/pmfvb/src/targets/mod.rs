//! Concrete factorized targets.

mod gaussian_toy;
mod logistic;

pub use gaussian_toy::{gaussian_toy_mean_field_optimum, GaussianToy};
pub use logistic::{
    generate_logistic_data, logistic_block_grad, logistic_log_unnorm_posterior, sigmoid,
    softplus, LogisticModel,
};
