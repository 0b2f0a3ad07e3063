//! Bivariate Gaussian toy target with a closed-form mean-field optimum,
//! used as a correctness oracle for the engine.

use crate::engine::{BlockSpec, FactorizedTarget};
use crate::error::{PmfvbError, Result};

#[derive(Debug, Clone)]
pub struct GaussianToy {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    precision: [[f64; 2]; 2],
}

impl GaussianToy {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        if (cov[0][1] - cov[1][0]).abs() > 1e-12 {
            return Err(PmfvbError::invalid("covariance must be symmetric"));
        }
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if !(cov[0][0] > 0.0) || !(det > 0.0) {
            return Err(PmfvbError::invalid("covariance must be positive definite"));
        }
        let precision = [
            [cov[1][1] / det, -cov[0][1] / det],
            [-cov[1][0] / det, cov[0][0] / det],
        ];
        Ok(GaussianToy {
            mean,
            cov,
            precision,
        })
    }

    pub fn precision(&self) -> [[f64; 2]; 2] {
        self.precision
    }
}

/// Mean-field optimum of a bivariate Gaussian: block `k` is
/// `N(mu_k, 1/Lambda_kk)` with `Lambda` the precision matrix.
pub fn gaussian_toy_mean_field_optimum(toy: &GaussianToy) -> [(f64, f64); 2] {
    [
        (toy.mean[0], 1.0 / toy.precision[0][0]),
        (toy.mean[1], 1.0 / toy.precision[1][1]),
    ]
}

impl FactorizedTarget for GaussianToy {
    fn blocks(&self) -> Vec<BlockSpec> {
        vec![BlockSpec::lmc("theta1", 1), BlockSpec::lmc("theta2", 1)]
    }

    fn log_unnorm_joint(&self, theta: &[f64]) -> f64 {
        let d0 = theta[0] - self.mean[0];
        let d1 = theta[1] - self.mean[1];
        let p = self.precision;
        -0.5 * (p[0][0] * d0 * d0 + 2.0 * p[0][1] * d0 * d1 + p[1][1] * d1 * d1)
    }

    fn block_grad(&self, block: usize, own: &[f64], others: &[&[f64]]) -> Vec<f64> {
        let p = self.precision;
        let (k, j) = if block == 0 { (0, 1) } else { (1, 0) };
        let dk = own[0] - self.mean[k];
        let dj = others[0][0] - self.mean[j];
        vec![-(p[k][k] * dk + p[k][j] * dj)]
    }
}
