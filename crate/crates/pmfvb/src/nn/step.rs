//! Random-block adaptive-drift LMC step for the weight cloud.

use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{clip_max_norm, subsample_indices, ParticleCloud};
use crate::error::{PmfvbError, Result};
use crate::nn::factors::{logq_w_grad, VariationalFactors};
use crate::nn::mlp::{MlpModel, Task};
use crate::par;
use crate::rng::{StreamCtx, PHASE_UPDATE};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DriftHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub a: f64,
    pub lambda: f64,
    pub step_size: f64,
    /// Fraction of the weight vector moved per particle per iteration.
    pub block_frac: f64,
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

impl Default for DriftHyper {
    fn default() -> Self {
        DriftHyper {
            beta1: 0.9,
            beta2: 0.99,
            a: 100.0,
            lambda: 1e-8,
            step_size: 0.001,
            block_frac: 0.10,
            grad_clip: None,
        }
    }
}

impl DriftHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(PmfvbError::invalid("step_size must be finite and >= 0"));
        }
        if !(self.block_frac > 0.0 && self.block_frac <= 1.0) {
            return Err(PmfvbError::invalid("block_frac must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.beta1) || !(0.0..=1.0).contains(&self.beta2) {
            return Err(PmfvbError::invalid("beta1, beta2 must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn block_size(&self, d_w: usize) -> usize {
        ((self.block_frac * d_w as f64).ceil() as usize).clamp(1, d_w)
    }
}

/// Running gradient-moment vectors m_t, v_t.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptiveDriftState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub hyper: DriftHyper,
}

impl AdaptiveDriftState {
    pub fn new(d_w: usize, hyper: DriftHyper) -> Self {
        AdaptiveDriftState { m: vec![0.0; d_w], v: vec![0.0; d_w], hyper }
    }

    /// Drift vector g_t = m ./ sqrt(v + lambda).
    pub fn drift(&self) -> Vec<f64> {
        self.m
            .iter()
            .zip(&self.v)
            .map(|(&m, &v)| m / (v + self.hyper.lambda).sqrt())
            .collect()
    }
}

/// One iteration of the random-block adaptive-drift update. Each
/// particle moves a random coordinate block of its weight vector by an
/// LMC step on log q(w) evaluated at (own block, cloud-mean complement),
/// with a*g_t added to the drift; afterwards m, v are refreshed from
/// fresh full gradients at the updated particles on the same minibatch.
#[allow(clippy::too_many_arguments)]
pub fn pmfvb_nn_step(
    cloud: &ParticleCloud,
    state: &AdaptiveDriftState,
    factors: &VariationalFactors,
    task: Task,
    model: &MlpModel,
    xs: &[&[f64]],
    ys: &[f64],
    n_total: usize,
    ctx: StreamCtx,
) -> Result<(ParticleCloud, AdaptiveDriftState)> {
    let hyper = &state.hyper;
    hyper.validate()?;
    let d_w = cloud.dim();
    if state.m.len() != d_w || factors.inv_tau.len() != d_w {
        return Err(PmfvbError::invalid("drift state / factor dimension mismatch"));
    }
    let m_particles = cloud.num_particles();
    let block = hyper.block_size(d_w);
    let half_h = hyper.step_size / 2.0;
    let sqrt_h = hyper.step_size.sqrt();
    let g_t = state.drift();
    let theta_bar = cloud.mean();

    let rows: Vec<Result<Vec<f64>>> = par::collect_indexed(m_particles, |i| {
        let mut rng = ctx.particle_rng(PHASE_UPDATE, i);
        let own = cloud.particle(i);
        let coords = subsample_indices(d_w, block, &mut rng)?;

        // Evaluation point: own coordinates on the block, cloud mean off
        // the block. With a full block this is the particle itself.
        let mut point;
        let eval: &[f64] = if block == d_w {
            own
        } else {
            point = theta_bar.clone();
            for &c in &coords {
                point[c] = own[c];
            }
            &point
        };
        let full = logq_w_grad(task, model, eval, factors, xs, ys, n_total)?;
        let mut drift: Vec<f64> = coords.iter().map(|&c| full[c]).collect();
        if hyper.a != 0.0 {
            for (d, &c) in drift.iter_mut().zip(&coords) {
                *d += hyper.a * g_t[c];
            }
        }
        if let Some(max_norm) = hyper.grad_clip {
            clip_max_norm(&mut drift, max_norm);
        }
        if drift.iter().any(|v| !v.is_finite()) {
            return Err(PmfvbError::NumericalFailure {
                block: cloud.block_id.clone(),
                particle: i,
                detail: "non-finite drift in weight update".into(),
            });
        }
        let mut out = own.to_vec();
        for (k, &c) in coords.iter().enumerate() {
            let eta: f64 = rng.sample(StandardNormal);
            out[c] = own[c] + half_h * drift[k] + sqrt_h * eta;
        }
        Ok(out)
    });

    let mut values = Vec::with_capacity(m_particles * d_w);
    for row in rows {
        values.extend_from_slice(&row?);
    }
    let updated = ParticleCloud::new(cloud.block_id.clone(), m_particles, d_w, values)?;

    // Fresh full gradients at the moved particles, same minibatch.
    let grads: Vec<Result<Vec<f64>>> = par::collect_indexed(m_particles, |i| {
        logq_w_grad(task, model, updated.particle(i), factors, xs, ys, n_total)
    });
    let mut g_mean = vec![0.0; d_w];
    let mut all = Vec::with_capacity(m_particles);
    for g in grads {
        let g = g?;
        for (a, v) in g_mean.iter_mut().zip(&g) {
            *a += v;
        }
        all.push(g);
    }
    let inv_m = 1.0 / m_particles as f64;
    g_mean.iter_mut().for_each(|v| *v *= inv_m);
    let mut spread = vec![0.0; d_w];
    for g in &all {
        for j in 0..d_w {
            let d = g[j] - g_mean[j];
            spread[j] += d * d;
        }
    }
    // v_bar = sqrt of the mean squared deviation, elementwise.
    for s in spread.iter_mut() {
        *s = (*s * inv_m).sqrt();
    }

    let mut next = state.clone();
    for j in 0..d_w {
        next.m[j] = hyper.beta1 * next.m[j] + (1.0 - hyper.beta1) * g_mean[j];
        next.v[j] = hyper.beta2 * next.v[j] + (1.0 - hyper.beta2) * spread[j];
        if !next.m[j].is_finite() || !next.v[j].is_finite() {
            return Err(PmfvbError::NumericalFailure {
                block: cloud.block_id.clone(),
                particle: 0,
                detail: format!("non-finite drift moment at coordinate {j}"),
            });
        }
    }
    Ok((updated, next))
}
