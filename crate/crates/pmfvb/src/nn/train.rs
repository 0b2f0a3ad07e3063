//! Training loops: Algorithm-style particle training for the weight
//! cloud, and SGLD-family baseline chains on the joint posterior.

use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{check_stop, subsample_indices, ParticleCloud, RunTrace, StoppingRule};
use crate::error::{PmfvbError, Result};
use crate::nn::factors::{update_q_sigma2_nn, update_q_tau, NnPrior, VariationalFactors};
use crate::nn::joint::NnJointTarget;
use crate::nn::mlp::{sigmoid, MlpModel, Task};
use crate::nn::step::{pmfvb_nn_step, AdaptiveDriftState, DriftHyper};
use crate::rng::{substream, StreamCtx, PHASE_DATA, PHASE_INIT};
use crate::samplers::{adam_sgld_step, psgld_step, sgld_step, AdamSgldState, PsgldState};

/// Row-major feature matrix with aligned responses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NnDataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub n: usize,
    pub p: usize,
}

impl NnDataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, p: usize) -> Result<Self> {
        if p == 0 || y.is_empty() || x.len() != y.len() * p {
            return Err(PmfvbError::invalid("feature matrix shape mismatch"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(PmfvbError::invalid("dataset must be finite"));
        }
        Ok(NnDataset { n: y.len(), x, y, p })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self, idx: &[usize]) -> (Vec<&[f64]>, Vec<f64>) {
        let xs = idx.iter().map(|&i| self.row(i)).collect();
        let ys = idx.iter().map(|&i| self.y[i]).collect();
        (xs, ys)
    }

    pub fn response_variance(&self) -> f64 {
        let m = self.y.iter().sum::<f64>() / self.n as f64;
        self.y.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / self.n as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NnTrainConfig {
    pub num_particles: usize,
    /// None runs full batch.
    pub batch_size: Option<usize>,
    pub max_iters: usize,
    pub seed: u64,
    pub hyper: DriftHyper,
    pub prior: NnPrior,
    /// Standard deviation of the initial weight particles.
    pub init_sd: f64,
}

impl Default for NnTrainConfig {
    fn default() -> Self {
        NnTrainConfig {
            num_particles: 50,
            batch_size: Some(100),
            max_iters: 2000,
            seed: 0,
            hyper: DriftHyper::default(),
            prior: NnPrior::default(),
            init_sd: 0.1,
        }
    }
}

fn minibatch_indices(n: usize, batch: Option<usize>, seed: u64, iter: u64) -> Result<Vec<usize>> {
    match batch {
        None => Ok((0..n).collect()),
        Some(b) => {
            let b = b.min(n);
            let mut rng = substream(seed, PHASE_DATA, iter, 0, 0);
            subsample_indices(n, b, &mut rng)
        }
    }
}

pub struct NnFit {
    pub cloud: ParticleCloud,
    pub factors: VariationalFactors,
    pub trace: RunTrace,
    /// Plug-in noise variance 1 / E[1/sigma^2] (regression).
    pub noise_var: f64,
}

/// Particle training of the weight posterior: per iteration refresh the
/// analytic tau (and sigma^2) factors from the cloud, take one
/// random-block adaptive-drift step on a fresh minibatch, and record the
/// validation PPS. Stops by the supplied rule (validation patience by
/// convention) or at max_iters.
pub fn run_pmfvb_nn(
    task: Task,
    model: &MlpModel,
    train: &NnDataset,
    val: &NnDataset,
    cfg: &NnTrainConfig,
    rule: &StoppingRule,
) -> Result<NnFit> {
    cfg.hyper.validate()?;
    rule.validate()?;
    if train.p != model.input_dim() || val.p != model.input_dim() {
        return Err(PmfvbError::invalid("dataset width does not match model input"));
    }
    if cfg.num_particles == 0 {
        return Err(PmfvbError::invalid("need at least one particle"));
    }
    let d_w = model.num_weights();
    let init_ctx = StreamCtx::new(cfg.seed, 0, 0);
    let mut cloud = ParticleCloud::from_sampler("w", cfg.num_particles, d_w, |i| {
        let mut rng = init_ctx.particle_rng(PHASE_INIT, i);
        (0..d_w)
            .map(|_| cfg.init_sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    })?;
    let mut state = AdaptiveDriftState::new(d_w, cfg.hyper);
    let mut factors = VariationalFactors {
        inv_tau: vec![0.0; d_w],
        inv_sigma_sq: 1.0,
    };

    let mut trace = RunTrace::new(rule.window);
    trace.truncated = true;
    let start = std::time::Instant::now();

    for t in 0..cfg.max_iters {
        let idx = minibatch_indices(train.n, cfg.batch_size, cfg.seed, t as u64 + 1)?;
        let (xs, ys) = train.rows(&idx);

        factors.inv_tau = update_q_tau(&cloud, &cfg.prior);
        if task == Task::Regression {
            // On a minibatch this is exactly the n/|batch|-rescaled
            // estimator of the full residual moment.
            factors.inv_sigma_sq = update_q_sigma2_nn(&cloud, model, &xs, &ys)?;
        }

        let ctx = StreamCtx::new(cfg.seed, t as u64 + 1, 0);
        let (next_cloud, next_state) =
            pmfvb_nn_step(&cloud, &state, &factors, task, model, &xs, &ys, train.n, ctx)?;
        cloud = next_cloud;
        state = next_state;

        let val_pps = validation_pps(task, model, &cloud, val, 1.0 / factors.inv_sigma_sq)?;
        trace.push(-val_pps, Some(val_pps), start.elapsed().as_millis() as u64);
        if check_stop(&trace, rule)? {
            trace.truncated = false;
            break;
        }
    }

    let noise_var = 1.0 / factors.inv_sigma_sq;
    Ok(NnFit { cloud, factors, trace, noise_var })
}

fn validation_pps(
    task: Task,
    model: &MlpModel,
    cloud: &ParticleCloud,
    val: &NnDataset,
    noise_var: f64,
) -> Result<f64> {
    let w = cloud.mean();
    let n = val.n as f64;
    match task {
        Task::Regression => {
            let mut sse = 0.0;
            for i in 0..val.n {
                let r = val.y[i] - model.forward(&w, val.row(i))?;
                sse += r * r;
            }
            Ok(0.5 * (2.0 * std::f64::consts::PI * noise_var).ln() + sse / n / (2.0 * noise_var))
        }
        Task::Classification => {
            let mut nll = 0.0;
            for i in 0..val.n {
                let p = sigmoid(model.forward(&w, val.row(i))?).clamp(1e-12, 1.0 - 1e-12);
                nll -= if val.y[i] > 0.5 { p.ln() } else { (1.0 - p).ln() };
            }
            Ok(nll / n)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    Sgld,
    Psgld,
    AdamSgld,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub step_size: f64,
    pub n_iters: usize,
    pub burn_in: usize,
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Adaptive-drift magnitude for Adam-SGLD.
    pub a: f64,
    pub init_sd: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            step_size: 1e-4,
            n_iters: 5000,
            burn_in: 2500,
            batch_size: Some(100),
            seed: 0,
            a: 100.0,
            init_sd: 0.1,
        }
    }
}

pub struct BaselineFit {
    /// Posterior-mean weight vector (post burn-in average).
    pub w_mean: Vec<f64>,
    /// Posterior mean of sigma^2 (regression), from the chain.
    pub noise_var: f64,
}

impl BaselineFit {
    pub fn predict(&self, model: &MlpModel, x: &[f64], task: Task) -> Result<f64> {
        let eta = model.forward(&self.w_mean, x)?;
        Ok(match task {
            Task::Regression => eta,
            Task::Classification => sigmoid(eta),
        })
    }
}

const PHASE_CHAIN: u64 = 0x22;

/// One SGLD-family chain on the joint (w, log tau[, log sigma^2])
/// posterior; returns the post-burn-in mean of the weight block.
pub fn run_nn_baseline(
    method: BaselineMethod,
    task: Task,
    model: &MlpModel,
    train: &NnDataset,
    cfg: &BaselineConfig,
) -> Result<BaselineFit> {
    if cfg.burn_in >= cfg.n_iters {
        return Err(PmfvbError::invalid("burn_in must be below n_iters"));
    }
    let prior = NnPrior::default();
    let target = NnJointTarget { model, task, prior, n_total: train.n };
    let d = target.dim();
    let d_w = model.num_weights();

    let mut init_rng = substream(cfg.seed, PHASE_CHAIN, 0, 0, 0);
    let mut z: Vec<f64> = (0..d)
        .map(|_| cfg.init_sd * init_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut rng = substream(cfg.seed, PHASE_CHAIN, 1, 0, 0);

    let mut psgld = PsgldState::new(z.clone());
    let mut adam = AdamSgldState::new(z.clone(), cfg.a);

    let mut w_sum = vec![0.0; d_w];
    let mut s2_sum = 0.0;
    let mut kept = 0usize;
    for t in 0..cfg.n_iters {
        let idx = minibatch_indices(train.n, cfg.batch_size, cfg.seed, t as u64 + 1)?;
        let (xs, ys) = train.rows(&idx);
        match method {
            BaselineMethod::Sgld => {
                let g = target.grad(&z, &xs, &ys)?;
                z = sgld_step(&z, &g, cfg.step_size, &mut rng)?;
            }
            BaselineMethod::Psgld => {
                let g = target.grad(&psgld.theta, &xs, &ys)?;
                psgld_step(&mut psgld, &g, cfg.step_size, &mut rng)?;
                z = psgld.theta.clone();
            }
            BaselineMethod::AdamSgld => {
                let g = target.grad(&adam.theta, &xs, &ys)?;
                adam_sgld_step(&mut adam, &g, cfg.step_size, &mut rng)?;
                z = adam.theta.clone();
            }
        }
        if t >= cfg.burn_in {
            for (a, v) in w_sum.iter_mut().zip(&z[..d_w]) {
                *a += v;
            }
            if task == Task::Regression {
                s2_sum += z[2 * d_w].exp();
            }
            kept += 1;
        }
    }
    let inv = 1.0 / kept as f64;
    w_sum.iter_mut().for_each(|v| *v *= inv);
    let noise_var = if task == Task::Regression { s2_sum * inv } else { 1.0 };
    Ok(BaselineFit { w_mean: w_sum, noise_var })
}
