//! Joint unconstrained posterior over (w, log tau, log sigma^2) used by
//! the SGLD-family baselines — twice the dimension of the weight-only
//! LMC space, plus one for the noise variance in regression.

use crate::error::Result;
use crate::nn::factors::NnPrior;
use crate::nn::mlp::{loglik_term, sigmoid, MlpModel, Task};

pub struct NnJointTarget<'a> {
    pub model: &'a MlpModel,
    pub task: Task,
    pub prior: NnPrior,
    /// Total training size; data terms on a minibatch are rescaled by
    /// n_total / |batch|.
    pub n_total: usize,
}

impl<'a> NnJointTarget<'a> {
    pub fn dim(&self) -> usize {
        let d_w = self.model.num_weights();
        match self.task {
            Task::Regression => 2 * d_w + 1,
            Task::Classification => 2 * d_w,
        }
    }

    fn split(&self, z: &'a [f64]) -> (&'a [f64], &'a [f64], Option<f64>) {
        let d_w = self.model.num_weights();
        let (w, rest) = z.split_at(d_w);
        match self.task {
            Task::Regression => (w, &rest[..d_w], Some(rest[d_w])),
            Task::Classification => (w, rest, None),
        }
    }

    /// Unnormalized log posterior in (w, u = log tau, s = log sigma^2)
    /// coordinates, including the change-of-variables terms. The noise
    /// variance carries the improper 1/sigma^2 prior, whose log cancels
    /// against its Jacobian.
    pub fn log_density(&self, z: &[f64], xs: &[&[f64]], ys: &[f64]) -> Result<f64> {
        let (w, us, s) = self.split(z);
        let scale = self.n_total as f64 / xs.len() as f64;
        let mut lp = 0.0;
        for (&wj, &uj) in w.iter().zip(us) {
            let inv_tau = (-uj).exp();
            // N(w; 0, tau) + IG(tau; a0, b0) prior + Jacobian e^u.
            lp += -0.5 * uj - 0.5 * wj * wj * inv_tau
                - (self.prior.alpha0 + 1.0) * uj
                - self.prior.beta0 * inv_tau
                + uj;
        }
        let mut data = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            data += loglik_term(self.task, self.model.forward(w, x)?, y);
        }
        match s {
            Some(s) => {
                let inv_s2 = (-s).exp();
                lp += -0.5 * self.n_total as f64 * s + inv_s2 * scale * data;
            }
            None => lp += scale * data,
        }
        Ok(lp)
    }

    pub fn grad(&self, z: &[f64], xs: &[&[f64]], ys: &[f64]) -> Result<Vec<f64>> {
        let (w, us, s) = self.split(z);
        let d_w = w.len();
        let scale = self.n_total as f64 / xs.len() as f64;
        let mut g = vec![0.0; z.len()];

        for j in 0..d_w {
            let inv_tau = (-us[j]).exp();
            g[j] = -w[j] * inv_tau;
            g[d_w + j] = -0.5 + 0.5 * w[j] * w[j] * inv_tau - (self.prior.alpha0 + 1.0)
                + self.prior.beta0 * inv_tau
                + 1.0;
        }

        let mut data_grad = vec![0.0; d_w];
        let mut sq_resid = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let (eta, geta) = self.model.grad_eta(w, x)?;
            let coeff = match self.task {
                Task::Regression => y - eta,
                Task::Classification => y - sigmoid(eta),
            };
            if self.task == Task::Regression {
                sq_resid += (y - eta) * (y - eta);
            }
            for (dg, ge) in data_grad.iter_mut().zip(&geta) {
                *dg += coeff * ge;
            }
        }
        match s {
            Some(s) => {
                let inv_s2 = (-s).exp();
                for j in 0..d_w {
                    g[j] += inv_s2 * scale * data_grad[j];
                }
                g[2 * d_w] = -0.5 * self.n_total as f64 + 0.5 * inv_s2 * scale * sq_resid;
            }
            None => {
                for j in 0..d_w {
                    g[j] += scale * data_grad[j];
                }
            }
        }
        Ok(g)
    }
}
