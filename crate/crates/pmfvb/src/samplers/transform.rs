//! Coordinate transforms to an unconstrained parameterization, with the
//! log-Jacobian correction folded into the target density and gradient.

use serde::{Deserialize, Serialize};

use crate::error::{PmfvbError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordTransform {
    Identity,
    /// x = exp(z), for positive coordinates.
    Log,
    /// x = tanh(z), for coordinates in (-1, 1).
    Tanh,
}

impl CoordTransform {
    pub fn to_constrained(self, z: f64) -> f64 {
        match self {
            CoordTransform::Identity => z,
            CoordTransform::Log => z.exp(),
            CoordTransform::Tanh => z.tanh(),
        }
    }

    pub fn to_unconstrained(self, x: f64) -> Result<f64> {
        match self {
            CoordTransform::Identity => Ok(x),
            CoordTransform::Log => {
                if x <= 0.0 {
                    return Err(PmfvbError::Domain(format!("log transform needs x > 0, got {x}")));
                }
                Ok(x.ln())
            }
            CoordTransform::Tanh => {
                if x.abs() >= 1.0 {
                    return Err(PmfvbError::Domain(format!("tanh transform needs |x| < 1, got {x}")));
                }
                Ok(x.atanh())
            }
        }
    }

    /// dx/dz at the constrained value x.
    pub fn dxdz(self, x: f64) -> f64 {
        match self {
            CoordTransform::Identity => 1.0,
            CoordTransform::Log => x,
            CoordTransform::Tanh => 1.0 - x * x,
        }
    }

    /// log |dx/dz| at the constrained value x.
    pub fn log_jac(self, x: f64) -> f64 {
        match self {
            CoordTransform::Identity => 0.0,
            CoordTransform::Log => x.ln(),
            CoordTransform::Tanh => (1.0 - x * x).ln(),
        }
    }

    /// d/dz of log |dx/dz| at the constrained value x.
    pub fn dlogjac_dz(self, x: f64) -> f64 {
        match self {
            CoordTransform::Identity => 0.0,
            CoordTransform::Log => 1.0,
            CoordTransform::Tanh => -2.0 * x,
        }
    }
}

/// Wraps a constrained-space log density so samplers can run on all of
/// R^d. Density and gradient include the change-of-variables term.
pub struct UnconstrainedTarget<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub transforms: Vec<CoordTransform>,
    pub log_density: F,
    pub grad: G,
}

impl<F, G> UnconstrainedTarget<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(transforms: Vec<CoordTransform>, log_density: F, grad: G) -> Self {
        UnconstrainedTarget { transforms, log_density, grad }
    }

    pub fn dim(&self) -> usize {
        self.transforms.len()
    }

    pub fn constrain(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.transforms)
            .map(|(&zi, t)| t.to_constrained(zi))
            .collect()
    }

    pub fn unconstrain(&self, x: &[f64]) -> Result<Vec<f64>> {
        x.iter()
            .zip(&self.transforms)
            .map(|(&xi, t)| t.to_unconstrained(xi))
            .collect()
    }

    /// log pi(x(z)) + sum_j log |dx_j/dz_j|.
    pub fn log_density_z(&self, z: &[f64]) -> f64 {
        let x = self.constrain(z);
        let mut lp = (self.log_density)(&x);
        for (xi, t) in x.iter().zip(&self.transforms) {
            lp += t.log_jac(*xi);
        }
        lp
    }

    /// Chain rule: d/dz_j = (d log pi/dx_j) dx_j/dz_j + d log|J|/dz_j.
    pub fn grad_z(&self, z: &[f64]) -> Vec<f64> {
        let x = self.constrain(z);
        let gx = (self.grad)(&x);
        gx.iter()
            .zip(x.iter().zip(&self.transforms))
            .map(|(&g, (&xi, t))| g * t.dxdz(xi) + t.dlogjac_dz(xi))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn round_trip_is_exact() {
        for (t, x) in [
            (CoordTransform::Identity, -3.2),
            (CoordTransform::Log, 0.37),
            (CoordTransform::Log, 42.0),
            (CoordTransform::Tanh, -0.93),
            (CoordTransform::Tanh, 0.5),
        ] {
            let z = t.to_unconstrained(x).unwrap();
            assert_relative_eq!(t.to_constrained(z), x, max_relative = 1e-12);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(CoordTransform::Log.to_unconstrained(-1.0).is_err());
        assert!(CoordTransform::Tanh.to_unconstrained(1.0).is_err());
    }

    #[test]
    fn transformed_density_matches_finite_difference() {
        // Target: Gamma(3, 2)-ish density on x0 > 0 times a Beta-like
        // density on x1 in (-1, 1) times a Gaussian on x2.
        let logp = |x: &[f64]| {
            2.0 * x[0].ln() - 2.0 * x[0]
                + 3.0 * (1.0 + x[1]).ln()
                + 1.5 * (1.0 - x[1]).ln()
                - x[2] * x[2] / 2.0
        };
        let grad = |x: &[f64]| {
            vec![
                2.0 / x[0] - 2.0,
                3.0 / (1.0 + x[1]) - 1.5 / (1.0 - x[1]),
                -x[2],
            ]
        };
        let target = UnconstrainedTarget::new(
            vec![CoordTransform::Log, CoordTransform::Tanh, CoordTransform::Identity],
            logp,
            grad,
        );
        let z = vec![0.4, -0.8, 1.3];
        let g = target.grad_z(&z);
        for k in 0..3 {
            let h = 1e-6;
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            let fd = (target.log_density_z(&zp) - target.log_density_z(&zm)) / (2.0 * h);
            assert_relative_eq!(g[k], fd, max_relative = 1e-6);
        }
    }
}
