//! Bayesian logistic regression with an isotropic Gaussian prior and a
//! two-block parameter split.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::engine::{BlockSpec, FactorizedTarget};
use crate::error::{PmfvbError, Result};
use crate::rng::substream;

#[derive(Debug, Clone)]
pub struct LogisticModel {
    /// Row-major n x d design matrix; first column is the intercept.
    pub x: Vec<f64>,
    pub y: Vec<u8>,
    pub n: usize,
    pub d: usize,
    pub prior_var: f64,
    /// Coefficient indices of the two variational blocks.
    pub block1: Vec<usize>,
    pub block2: Vec<usize>,
}

impl LogisticModel {
    pub fn new(
        x: Vec<f64>,
        y: Vec<u8>,
        d: usize,
        prior_var: f64,
        block1: Vec<usize>,
        block2: Vec<usize>,
    ) -> Result<Self> {
        if d == 0 || x.len() % d != 0 {
            return Err(PmfvbError::invalid("design matrix shape mismatch"));
        }
        let n = x.len() / d;
        if y.len() != n {
            return Err(PmfvbError::invalid("y length must match rows of X"));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(PmfvbError::invalid("y must be binary in {0,1}"));
        }
        if !(prior_var > 0.0) {
            return Err(PmfvbError::invalid("prior variance must be positive"));
        }
        let mut all: Vec<usize> = block1.iter().chain(&block2).copied().collect();
        all.sort_unstable();
        if all != (0..d).collect::<Vec<_>>() {
            return Err(PmfvbError::invalid("blocks must partition {0..d-1}"));
        }
        Ok(LogisticModel {
            x,
            y,
            n,
            d,
            prior_var,
            block1,
            block2,
        })
    }

    /// Fixed split for d coefficients: first half vs second half.
    pub fn with_default_split(x: Vec<f64>, y: Vec<u8>, d: usize, prior_var: f64) -> Result<Self> {
        let half = d / 2;
        LogisticModel::new(
            x,
            y,
            d,
            prior_var,
            (0..half).collect(),
            (half..d).collect(),
        )
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn assemble_beta(&self, theta1: &[f64], theta2: &[f64]) -> Vec<f64> {
        let mut beta = vec![0.0; self.d];
        for (j, &c) in self.block1.iter().enumerate() {
            beta[c] = theta1[j];
        }
        for (j, &c) in self.block2.iter().enumerate() {
            beta[c] = theta2[j];
        }
        beta
    }

    /// Dataset CSV: one row per observation, features then the response.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for j in 0..self.d {
            s.push_str(&format!("x{j},"));
        }
        s.push_str("y\n");
        for i in 0..self.n {
            for v in self.row(i) {
                s.push_str(&format!("{v:?},"));
            }
            s.push_str(&format!("{}\n", self.y[i]));
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load_csv(path: &Path, prior_var: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| PmfvbError::invalid("empty dataset file"))?;
        let d = header.split(',').count() - 1;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 1 {
                return Err(PmfvbError::invalid("malformed dataset row"));
            }
            for f in &fields[..d] {
                x.push(f.parse::<f64>().map_err(|e| PmfvbError::invalid(e.to_string()))?);
            }
            y.push(fields[d].parse::<u8>().map_err(|e| PmfvbError::invalid(e.to_string()))?);
        }
        LogisticModel::with_default_split(x, y, d, prior_var)
    }
}

#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(eta)) without overflow.
#[inline]
pub fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Unnormalized log posterior: Bernoulli log-likelihood in the stable
/// `y*eta - log(1+exp(eta))` form plus the Gaussian prior term.
pub fn logistic_log_unnorm_posterior(beta: &[f64], model: &LogisticModel) -> f64 {
    debug_assert_eq!(beta.len(), model.d);
    let mut ll = 0.0;
    for i in 0..model.n {
        let eta: f64 = model.row(i).iter().zip(beta).map(|(x, b)| x * b).sum();
        ll += model.y[i] as f64 * eta - softplus(eta);
    }
    let sq: f64 = beta.iter().map(|b| b * b).sum();
    ll - sq / (2.0 * model.prior_var)
}

/// Gradient of the log posterior w.r.t. block 1 or 2 (0-indexed).
pub fn logistic_block_grad(
    block: usize,
    theta1: &[f64],
    theta2: &[f64],
    model: &LogisticModel,
) -> Vec<f64> {
    let beta = model.assemble_beta(theta1, theta2);
    let (cols, own) = if block == 0 {
        (&model.block1, theta1)
    } else {
        (&model.block2, theta2)
    };
    let mut grad = vec![0.0; cols.len()];
    for i in 0..model.n {
        let row = model.row(i);
        let eta: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
        let resid = model.y[i] as f64 - sigmoid(eta);
        for (g, &c) in grad.iter_mut().zip(cols) {
            *g += resid * row[c];
        }
    }
    for (g, t) in grad.iter_mut().zip(own) {
        *g -= t / model.prior_var;
    }
    grad
}

/// Synthetic recipe: beta ~ N(0, prior_var I), covariates standard normal
/// with an intercept column, responses Bernoulli(sigmoid(x'beta)).
pub fn generate_logistic_data(
    n: usize,
    d: usize,
    prior_var: f64,
    seed: u64,
) -> Result<(LogisticModel, Vec<f64>)> {
    if n == 0 || d < 2 {
        return Err(PmfvbError::invalid("need n >= 1 and d >= 2"));
    }
    const PHASE_GEN: u64 = 0x10;
    let mut rng = substream(seed, PHASE_GEN, 0, 0, 0);
    let beta: Vec<f64> = (0..d)
        .map(|_| prior_var.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut eta = beta[0];
        x.push(1.0);
        for b in &beta[1..] {
            let v: f64 = rng.sample(StandardNormal);
            x.push(v);
            eta += b * v;
        }
        let u: f64 = rng.random();
        y.push(u8::from(u < sigmoid(eta)));
    }
    let model = LogisticModel::with_default_split(x, y, d, prior_var)?;
    Ok((model, beta))
}

impl FactorizedTarget for LogisticModel {
    fn blocks(&self) -> Vec<BlockSpec> {
        vec![
            BlockSpec::lmc("theta1", self.block1.len()),
            BlockSpec::lmc("theta2", self.block2.len()),
        ]
    }

    fn log_unnorm_joint(&self, theta: &[f64]) -> f64 {
        let (t1, t2) = theta.split_at(self.block1.len());
        let beta = self.assemble_beta(t1, t2);
        logistic_log_unnorm_posterior(&beta, self)
    }

    fn block_grad(&self, block: usize, own: &[f64], others: &[&[f64]]) -> Vec<f64> {
        if block == 0 {
            logistic_block_grad(0, own, others[0], self)
        } else {
            logistic_block_grad(1, others[0], own, self)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_model(n: usize) -> LogisticModel {
        // x rows (1, 0.5), alternating y.
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            x.extend_from_slice(&[1.0, 0.5]);
            y.push((i % 2) as u8);
        }
        LogisticModel::new(x, y, 2, 4.0, vec![0], vec![1]).unwrap()
    }

    #[test]
    fn zero_beta_gives_n_log_half() {
        let model = toy_model(4);
        let lp = logistic_log_unnorm_posterior(&[0.0, 0.0], &model);
        assert!((lp - 4.0 * 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_observation_log_half() {
        let model =
            LogisticModel::new(vec![1.0], vec![1], 1, 1.0, vec![0], vec![]).unwrap();
        let lp = logistic_log_unnorm_posterior(&[0.0], &model);
        assert!((lp - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_bernoulli_product() {
        let (model, _) = generate_logistic_data(20, 3, 1.0, 99).unwrap();
        let mut rng = substream(5, 0x70, 0, 0, 0);
        for _ in 0..20 {
            let beta: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let mut naive = 0.0;
            for i in 0..model.n {
                let eta: f64 = model.row(i).iter().zip(&beta).map(|(x, b)| x * b).sum();
                let p = sigmoid(eta);
                naive += if model.y[i] == 1 { p.ln() } else { (1.0 - p).ln() };
            }
            naive -= beta.iter().map(|b| b * b).sum::<f64>() / 2.0;
            let fast = logistic_log_unnorm_posterior(&beta, &model);
            assert!((fast - naive).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_theta_gradient_is_residual_sum() {
        let model = toy_model(6); // y = 0,1,0,1,0,1
        let g = logistic_block_grad(0, &[0.0], &[0.0], &model);
        // sum (y_i - 0.5) * x_i0 = (3*0.5 - 3*0.5) = 0
        assert!(g[0].abs() < 1e-12);
        let g2 = logistic_block_grad(1, &[0.0], &[0.0], &model);
        assert!(g2[0].abs() < 1e-12);
    }

    #[test]
    fn overflow_safe_at_large_beta() {
        let model = toy_model(10);
        let lp = logistic_log_unnorm_posterior(&[1e3, -1e3], &model);
        assert!(lp.is_finite());
    }

    #[test]
    fn generation_is_deterministic_and_shaped() {
        let (a, beta_a) = generate_logistic_data(200, 4, 4.0, 7).unwrap();
        let (b, beta_b) = generate_logistic_data(200, 4, 4.0, 7).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(beta_a, beta_b);
        assert_eq!(a.n, 200);
        assert_eq!(a.d, 4);
        assert!(a.x.chunks(4).all(|r| r[0] == 1.0));
    }

    #[test]
    fn symmetric_bernoulli_at_zero_beta() {
        // Force beta ~ 0 via tiny prior variance; mean(y) ~ 0.5.
        let (model, _) = generate_logistic_data(10_000, 2, 1e-12, 3).unwrap();
        let mean = model.y.iter().map(|&v| v as f64).sum::<f64>() / model.n as f64;
        assert!((mean - 0.5).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn csv_round_trip() {
        let (model, _) = generate_logistic_data(25, 4, 4.0, 1).unwrap();
        let dir = std::env::temp_dir().join("pmfvb_logistic_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("data.csv");
        model.save_csv(&path).unwrap();
        let loaded = LogisticModel::load_csv(&path, 4.0).unwrap();
        assert_eq!(loaded.x, model.x);
        assert_eq!(loaded.y, model.y);
    }
}
