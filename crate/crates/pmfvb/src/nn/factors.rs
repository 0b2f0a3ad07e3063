//! Analytic Inverse-Gamma factors of the ridge-type weight prior and the
//! observation noise, summarized by their exact reciprocal means.

use serde::{Deserialize, Serialize};

use crate::engine::ParticleCloud;
use crate::error::{PmfvbError, Result};
use crate::nn::mlp::{loglik_term, sigmoid, MlpModel, Task};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NnPrior {
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for NnPrior {
    fn default() -> Self {
        NnPrior { alpha0: 1.0, beta0: 0.01 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationalFactors {
    /// Per-weight E[1/tau_j].
    pub inv_tau: Vec<f64>,
    /// E[1/sigma^2]; fixed to 1 for classification.
    pub inv_sigma_sq: f64,
}

/// q(tau_j) = IG(alpha0 + 1/2, beta0 + <w_j^2>/2); returns E[1/tau_j].
pub fn update_q_tau(w_cloud: &ParticleCloud, prior: &NnPrior) -> Vec<f64> {
    let m = w_cloud.num_particles() as f64;
    let d = w_cloud.dim();
    let mut second = vec![0.0; d];
    for i in 0..w_cloud.num_particles() {
        for (s, &w) in second.iter_mut().zip(w_cloud.particle(i)) {
            *s += w * w;
        }
    }
    second
        .iter()
        .map(|s| (prior.alpha0 + 0.5) / (prior.beta0 + 0.5 * s / m))
        .collect()
}

/// q(sigma^2) = IG(n/2, <sum residual^2>/2); returns E[1/sigma^2].
pub fn update_q_sigma2_nn(
    w_cloud: &ParticleCloud,
    model: &MlpModel,
    xs: &[&[f64]],
    ys: &[f64],
) -> Result<f64> {
    let m = w_cloud.num_particles() as f64;
    let n = ys.len() as f64;
    let mut acc = 0.0;
    for i in 0..w_cloud.num_particles() {
        let w = w_cloud.particle(i);
        for (x, &y) in xs.iter().zip(ys) {
            let r = y - model.forward(w, x)?;
            acc += r * r;
        }
    }
    let moment = acc / m;
    if !(moment > 0.0) {
        return Err(PmfvbError::NumericalFailure {
            block: "q(sigma2)".into(),
            particle: 0,
            detail: "zero residual moment: degenerate fit".into(),
        });
    }
    Ok((n / 2.0) / (0.5 * moment))
}

/// Log-density of the optimal weight factor (up to a constant), with the
/// data term estimated on the given rows and rescaled by n_total/|batch|.
pub fn logq_w(
    task: Task,
    model: &MlpModel,
    w: &[f64],
    factors: &VariationalFactors,
    xs: &[&[f64]],
    ys: &[f64],
    n_total: usize,
) -> Result<f64> {
    let scale = n_total as f64 / xs.len() as f64;
    let mut lq = 0.0;
    for (&it, &wj) in factors.inv_tau.iter().zip(w) {
        lq -= 0.5 * it * wj * wj;
    }
    let mut data = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        data += loglik_term(task, model.forward(w, x)?, y);
    }
    let prec = match task {
        Task::Regression => factors.inv_sigma_sq,
        Task::Classification => 1.0,
    };
    Ok(lq + prec * scale * data)
}

/// Gradient of `logq_w` w.r.t. the full weight vector.
pub fn logq_w_grad(
    task: Task,
    model: &MlpModel,
    w: &[f64],
    factors: &VariationalFactors,
    xs: &[&[f64]],
    ys: &[f64],
    n_total: usize,
) -> Result<Vec<f64>> {
    let scale = n_total as f64 / xs.len() as f64;
    let prec = match task {
        Task::Regression => factors.inv_sigma_sq,
        Task::Classification => 1.0,
    };
    let mut g = vec![0.0; w.len()];
    for (x, &y) in xs.iter().zip(ys) {
        let (eta, geta) = model.grad_eta(w, x)?;
        let coeff = match task {
            Task::Regression => y - eta,
            Task::Classification => y - sigmoid(eta),
        };
        for (gj, ge) in g.iter_mut().zip(&geta) {
            *gj += coeff * ge;
        }
    }
    for j in 0..w.len() {
        g[j] = -factors.inv_tau[j] * w[j] + prec * scale * g[j];
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use crate::rng::substream;

    #[test]
    fn tau_update_at_zero_weights() {
        let cloud = ParticleCloud::new("w", 3, 2, vec![0.0; 6]).unwrap();
        let it = update_q_tau(&cloud, &NnPrior::default());
        assert_eq!(it, vec![150.0, 150.0]);
    }

    #[test]
    fn tau_update_inverse_check() {
        // Choose <w^2> so E[1/tau] lands exactly on a target value c.
        let prior = NnPrior::default();
        let c = 7.0;
        let w2 = 2.0 * ((prior.alpha0 + 0.5) / c - prior.beta0);
        let w = w2.sqrt();
        let cloud = ParticleCloud::new("w", 4, 1, vec![w, -w, w, -w]).unwrap();
        let it = update_q_tau(&cloud, &prior);
        assert_relative_eq!(it[0], c, max_relative = 1e-12);
    }

    #[test]
    fn tau_update_identical_particles() {
        let cloud = ParticleCloud::new("w", 5, 2, vec![0.3, -0.4].repeat(5)).unwrap();
        let prior = NnPrior::default();
        let it = update_q_tau(&cloud, &prior);
        assert_relative_eq!(it[0], 1.5 / (0.01 + 0.5 * 0.09), max_relative = 1e-12);
        assert_relative_eq!(it[1], 1.5 / (0.01 + 0.5 * 0.16), max_relative = 1e-12);
    }

    #[test]
    fn sigma2_unit_noise() {
        // Linear 1-weight net with zero weights: residual = y. Choose y
        // so that <sum residual^2> = n, giving E[1/sigma^2] = 1.
        let model = MlpModel::new(vec![1, 1]).unwrap();
        let cloud = ParticleCloud::new("w", 2, 2, vec![0.0; 4]).unwrap();
        let xs_store = [[0.0], [0.0], [0.0]];
        let xs: Vec<&[f64]> = xs_store.iter().map(|v| v.as_slice()).collect();
        let ys = [1.0, 1.0, 1.0];
        let v = update_q_sigma2_nn(&cloud, &model, &xs, &ys).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn sigma2_matches_naive_double_loop() {
        let model = MlpModel::new(vec![2, 3, 1]).unwrap();
        let mut rng = substream(21, 0x31, 0, 0, 0);
        let m = 6;
        let cloud = ParticleCloud::from_sampler("w", m, model.num_weights(), |_| {
            (0..model.num_weights()).map(|_| 0.4 * (2.0 * rng.random::<f64>() - 1.0)).collect()
        })
        .unwrap();
        let xs_store: Vec<[f64; 2]> = (0..5)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let xs: Vec<&[f64]> = xs_store.iter().map(|v| v.as_slice()).collect();
        let ys: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();

        let mut acc = 0.0;
        for i in 0..m {
            for (x, &y) in xs.iter().zip(&ys) {
                let r = y - model.forward(cloud.particle(i), x).unwrap();
                acc += r * r;
            }
        }
        let expect = (ys.len() as f64 / 2.0) / (0.5 * acc / m as f64);
        let got = update_q_sigma2_nn(&cloud, &model, &xs, &ys).unwrap();
        assert_relative_eq!(got, expect, max_relative = 1e-10);
    }

    #[test]
    fn sigma2_degenerate_fit_errors() {
        // y exactly reproduced by every particle -> zero residuals.
        let model = MlpModel::new(vec![1, 1]).unwrap();
        let cloud = ParticleCloud::new("w", 1, 2, vec![0.0, 0.0]).unwrap();
        let x_store = [[1.0]];
        let xs: Vec<&[f64]> = x_store.iter().map(|v| v.as_slice()).collect();
        assert!(update_q_sigma2_nn(&cloud, &model, &xs, &[0.0]).is_err());
    }

    #[test]
    fn logq_grad_matches_finite_difference() {
        let model = MlpModel::new(vec![3, 4, 1]).unwrap();
        let mut rng = substream(22, 0x31, 0, 0, 0);
        let w: Vec<f64> = (0..model.num_weights())
            .map(|_| 0.5 * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let factors = VariationalFactors {
            inv_tau: (0..model.num_weights()).map(|_| 0.5 + rng.random::<f64>()).collect(),
            inv_sigma_sq: 1.7,
        };
        let xs_store: Vec<[f64; 3]> = (0..4)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let xs: Vec<&[f64]> = xs_store.iter().map(|v| v.as_slice()).collect();
        for (task, ys) in [
            (Task::Regression, vec![0.3, -0.8, 1.2, 0.0]),
            (Task::Classification, vec![1.0, 0.0, 1.0, 0.0]),
        ] {
            let g = logq_w_grad(task, &model, &w, &factors, &xs, &ys, 40).unwrap();
            for k in 0..w.len() {
                let h = 1e-6;
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += h;
                wm[k] -= h;
                let fd = (logq_w(task, &model, &wp, &factors, &xs, &ys, 40).unwrap()
                    - logq_w(task, &model, &wm, &factors, &xs, &ys, 40).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(g[k], fd, max_relative = 1e-5, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn zero_inv_tau_reduces_to_likelihood_gradient() {
        let model = MlpModel::new(vec![2, 1]).unwrap();
        let w = vec![0.2, -0.3, 0.1];
        let factors = VariationalFactors { inv_tau: vec![0.0; 3], inv_sigma_sq: 1.0 };
        let xs_store = [[1.0, 2.0]];
        let xs: Vec<&[f64]> = xs_store.iter().map(|v| v.as_slice()).collect();
        let ys = [0.5];
        let g = logq_w_grad(Task::Regression, &model, &w, &factors, &xs, &ys, 1).unwrap();
        let data = crate::nn::mlp::mlp_backward(&model, &w, &xs, &ys, Task::Regression).unwrap();
        assert_eq!(g, data);
    }
}
