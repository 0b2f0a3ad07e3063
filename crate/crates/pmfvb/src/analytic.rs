//! Closed-form variational factors whose parameters are refreshed from
//! particle moments.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PmfvbError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum AnalyticFactor {
    Gaussian { mean: f64, var: f64 },
    InverseGamma { shape: f64, rate: f64 },
}

impl AnalyticFactor {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AnalyticFactor::Gaussian { mean, var } => {
                if !mean.is_finite() || !(var > 0.0) {
                    return Err(PmfvbError::invalid("Gaussian factor needs finite mean, var > 0"));
                }
            }
            AnalyticFactor::InverseGamma { shape, rate } => {
                if !(shape > 0.0) || !(rate > 0.0) {
                    return Err(PmfvbError::invalid("Inverse-Gamma factor needs shape, rate > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            AnalyticFactor::Gaussian { mean, var } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + var.sqrt() * z
            }
            AnalyticFactor::InverseGamma { shape, rate } => {
                // X ~ IG(shape, rate)  <=>  rate / X ~ Gamma(shape, 1).
                let g = Gamma::new(shape, 1.0).expect("validated parameters");
                rate / g.sample(rng)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            AnalyticFactor::Gaussian { mean, .. } => mean,
            AnalyticFactor::InverseGamma { shape, rate } => rate / (shape - 1.0),
        }
    }

    /// `E[1/X]`; for Inverse-Gamma(shape, rate) this is shape/rate.
    pub fn reciprocal_mean(&self) -> f64 {
        match *self {
            AnalyticFactor::Gaussian { .. } => f64::NAN,
            AnalyticFactor::InverseGamma { shape, rate } => shape / rate,
        }
    }
}
