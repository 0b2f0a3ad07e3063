//! SGLD-family baseline samplers and a MALA oracle.

mod transform;

pub use transform::{CoordTransform, UnconstrainedTarget};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{PmfvbError, Result};
use crate::rng::substream;

fn check_finite(label: &str, g: &[f64]) -> Result<()> {
    if let Some(k) = g.iter().position(|v| !v.is_finite()) {
        return Err(PmfvbError::NumericalFailure {
            block: label.into(),
            particle: k,
            detail: "non-finite gradient component".into(),
        });
    }
    Ok(())
}

/// One unadjusted Langevin step: theta + (h/2) g + sqrt(h) eta.
pub fn sgld_step(theta: &[f64], grad_estimate: &[f64], h: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(PmfvbError::invalid("step size must be positive"));
    }
    check_finite("sgld", grad_estimate)?;
    let half_h = 0.5 * h;
    let sqrt_h = h.sqrt();
    Ok(theta
        .iter()
        .zip(grad_estimate)
        .map(|(&x, &g)| {
            let eta: f64 = rng.sample(StandardNormal);
            x + half_h * g + sqrt_h * eta
        })
        .collect())
}

/// RMSprop-style diagonal preconditioner state for pSGLD.
#[derive(Debug, Clone)]
pub struct PsgldState {
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    pub rho: f64,
    pub lambda: f64,
}

impl PsgldState {
    pub fn new(theta: Vec<f64>) -> Self {
        let d = theta.len();
        PsgldState { theta, v: vec![0.0; d], rho: 0.99, lambda: 1e-5 }
    }
}

/// V <- rho V + (1-rho) g*g; G = 1/(sqrt(V)+lambda);
/// theta <- theta + (h/2) G*g + sqrt(h) sqrt(G) eta.
/// The curvature correction term of the original scheme is omitted.
pub fn psgld_step(state: &mut PsgldState, grad_estimate: &[f64], h: f64, rng: &mut impl Rng) -> Result<()> {
    if !(h > 0.0) {
        return Err(PmfvbError::invalid("step size must be positive"));
    }
    check_finite("psgld", grad_estimate)?;
    let half_h = 0.5 * h;
    let sqrt_h = h.sqrt();
    for j in 0..state.theta.len() {
        let g = grad_estimate[j];
        state.v[j] = state.rho * state.v[j] + (1.0 - state.rho) * g * g;
        let prec = 1.0 / (state.v[j].sqrt() + state.lambda);
        let eta: f64 = rng.sample(StandardNormal);
        state.theta[j] += half_h * prec * g + sqrt_h * prec.sqrt() * eta;
    }
    Ok(())
}

/// Adaptive-drift (ADAM-style) SGLD state for a single chain.
#[derive(Debug, Clone)]
pub struct AdamSgldState {
    pub theta: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub a: f64,
    pub lambda: f64,
}

impl AdamSgldState {
    pub fn new(theta: Vec<f64>, a: f64) -> Self {
        let d = theta.len();
        AdamSgldState {
            theta,
            m: vec![0.0; d],
            v: vec![0.0; d],
            beta1: 0.9,
            beta2: 0.99,
            a,
            lambda: 1e-8,
        }
    }
}

/// theta <- theta + (h/2)(g + a * m/sqrt(v+lambda)) + sqrt(h) eta, then
/// EMA-update m and v from g. At a = 0 the drift reduces to g exactly
/// and the trajectory matches `sgld_step` under a shared rng.
pub fn adam_sgld_step(state: &mut AdamSgldState, grad_estimate: &[f64], h: f64, rng: &mut impl Rng) -> Result<()> {
    if !(h > 0.0) {
        return Err(PmfvbError::invalid("step size must be positive"));
    }
    check_finite("adam-sgld", grad_estimate)?;
    let half_h = 0.5 * h;
    let sqrt_h = h.sqrt();
    for j in 0..state.theta.len() {
        let g = grad_estimate[j];
        let drift = if state.a == 0.0 {
            g
        } else {
            g + state.a * state.m[j] / (state.v[j] + state.lambda).sqrt()
        };
        let eta: f64 = rng.sample(StandardNormal);
        // Same association as sgld_step so a = 0 is bit-identical.
        state.theta[j] = state.theta[j] + half_h * drift + sqrt_h * eta;
        state.m[j] = state.beta1 * state.m[j] + (1.0 - state.beta1) * g;
        state.v[j] = state.beta2 * state.v[j] + (1.0 - state.beta2) * g * g;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MalaResult {
    /// Post-burn-in draws in the constrained parameterization, one row
    /// per draw.
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    /// Set when acceptance falls below 1% — the step size is too large.
    pub low_acceptance: bool,
}

impl MalaResult {
    pub fn column_mean(&self, j: usize) -> f64 {
        self.samples.iter().map(|s| s[j]).sum::<f64>() / self.samples.len() as f64
    }

    pub fn column_var(&self, j: usize) -> f64 {
        let m = self.column_mean(j);
        self.samples.iter().map(|s| (s[j] - m) * (s[j] - m)).sum::<f64>()
            / self.samples.len() as f64
    }
}

const PHASE_MALA: u64 = 0x20;

/// Metropolis-adjusted Langevin with the asymmetric proposal correction,
/// run in the unconstrained space of `target`.
pub fn mala_sample<F, G>(
    target: &UnconstrainedTarget<F, G>,
    init_constrained: &[f64],
    h: f64,
    n_samples: usize,
    burn_in: usize,
    seed: u64,
) -> Result<MalaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if !(h > 0.0) || n_samples == 0 {
        return Err(PmfvbError::invalid("need h > 0 and n_samples >= 1"));
    }
    let mut rng = substream(seed, PHASE_MALA, 0, 0, 0);
    let mut z = target.unconstrain(init_constrained)?;
    let mut lp = target.log_density_z(&z);
    let mut g = target.grad_z(&z);
    check_finite("mala", &g)?;
    if !lp.is_finite() {
        return Err(PmfvbError::invalid("MALA initialized at a point of zero density"));
    }

    let half_h = 0.5 * h;
    let d = z.len();
    // log q(b | a) = -||b - a - (h/2) grad(a)||^2 / (2h), dropping the
    // shared normalization.
    let log_q = |to: &[f64], from: &[f64], grad_from: &[f64]| {
        let mut s = 0.0;
        for j in 0..d {
            let diff = to[j] - from[j] - half_h * grad_from[j];
            s += diff * diff;
        }
        -s / (2.0 * h)
    };

    let total = burn_in + n_samples;
    let mut samples = Vec::with_capacity(n_samples);
    let mut accepted = 0usize;
    let sqrt_h = h.sqrt();
    for it in 0..total {
        let mut prop = vec![0.0; d];
        for j in 0..d {
            let eta: f64 = rng.sample(StandardNormal);
            prop[j] = z[j] + half_h * g[j] + sqrt_h * eta;
        }
        let lp_prop = target.log_density_z(&prop);
        if lp_prop.is_finite() {
            let g_prop = target.grad_z(&prop);
            if g_prop.iter().all(|v| v.is_finite()) {
                let log_alpha = lp_prop - lp + log_q(&z, &prop, &g_prop) - log_q(&prop, &z, &g);
                let u: f64 = rng.random();
                if u.ln() < log_alpha {
                    z = prop;
                    lp = lp_prop;
                    g = g_prop;
                    accepted += 1;
                }
            }
        }
        if it >= burn_in {
            samples.push(target.constrain(&z));
        }
    }
    let acceptance_rate = accepted as f64 / total as f64;
    Ok(MalaResult {
        samples,
        acceptance_rate,
        low_acceptance: acceptance_rate < 0.01,
    })
}
