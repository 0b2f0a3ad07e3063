//! Particle mean-field variational Bayes.
//!
//! Approximates a factorized posterior by moving per-block particle
//! clouds with unadjusted Langevin Monte Carlo steps, mixing in analytic
//! conjugate factor updates where available. Includes concrete targets
//! (Bayesian logistic regression, a Gaussian toy with a known mean-field
//! optimum), a stochastic volatility model, a Bayesian-neural-network
//! variant with adaptive drift, and SGLD-family baseline samplers with a
//! MALA oracle.

pub mod analytic;
pub mod engine;
pub mod error;
pub mod nn;
pub mod par;
pub mod rng;
pub mod samplers;
pub mod sv;
pub mod targets;

pub use error::{PmfvbError, Result};
