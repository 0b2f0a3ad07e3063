//! Stochastic volatility target with the three-factor variational family
//! `q(mu) q(sigma^2) q(phi, x_{1:T})`: Gaussian and Inverse-Gamma factors
//! updated in closed form from particle moments, and one LMC cloud over
//! the persistence parameter and the latent log-volatility path.

use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticFactor;
use crate::engine::{
    check_stop, lmc_block_update, LmcConfig, ParticleCloud, RunTrace, StoppingRule,
};
use crate::error::{PmfvbError, Result};
use crate::rng::{StreamCtx, PHASE_INIT, PHASE_LOWER_BOUND};

/// Reflection margin keeping every particle's phi inside (-1, 1).
pub const PHI_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvData {
    pub y: Vec<f64>,
}

impl SvData {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(PmfvbError::invalid("SV series needs T >= 2"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(PmfvbError::invalid("SV series must be finite"));
        }
        Ok(SvData { y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// CSV with header `t,y`, 1-based time index.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("t,y\n");
        for (t, v) in self.y.iter().enumerate() {
            s.push_str(&format!("{},{v:?}\n", t + 1));
        }
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut y = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let v = line
                .split(',')
                .nth(1)
                .ok_or_else(|| PmfvbError::invalid("malformed SV csv row"))?;
            y.push(v.parse::<f64>().map_err(|e| PmfvbError::invalid(e.to_string()))?);
        }
        SvData::new(y)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SvPriors {
    pub sigma0_sq: f64,
    pub a0: f64,
    pub b0: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for SvPriors {
    fn default() -> Self {
        SvPriors {
            sigma0_sq: 10.0,
            a0: 20.0,
            b0: 1.5,
            alpha0: 2.5,
            beta0: 0.025,
        }
    }
}

impl SvPriors {
    pub fn validate(&self) -> Result<()> {
        if [self.sigma0_sq, self.a0, self.b0, self.alpha0, self.beta0]
            .iter()
            .any(|v| !(*v > 0.0))
        {
            return Err(PmfvbError::invalid("SV prior hyperparameters must be positive"));
        }
        Ok(())
    }
}

/// Parameters of the two analytic factors `q(mu) = N(mu_q, sigma_q_sq)`
/// and `q(sigma^2) = IG(alpha_sigma2, beta_sigma2)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SvFactorParams {
    pub mu_q: f64,
    pub sigma_q_sq: f64,
    pub alpha_sigma2: f64,
    pub beta_sigma2: f64,
}

/// The Gaussian-factor numerator B is sometimes written with a (T-1)
/// prefactor on a sum that already runs over t = 2..T, which is
/// inconsistent with the matching term of A. `Corrected` drops the
/// prefactor; a brute-force coordinate-update oracle supports it, so it
/// is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BVariant {
    Uncorrected,
    #[default]
    Corrected,
}

#[derive(Debug, Clone)]
pub struct SvVariationalState {
    pub params: SvFactorParams,
    /// M particles of dimension 1 + T holding (phi, x_{1:T}).
    pub cloud: ParticleCloud,
}

/// Closed-form update of q(mu): precision A and numerator B from particle
/// averages of the (phi, x) cloud. Returns (mu_q, sigma_q_sq).
pub fn update_q_mu(
    cloud: &ParticleCloud,
    alpha_sigma2: f64,
    beta_sigma2: f64,
    priors: &SvPriors,
    variant: BVariant,
) -> Result<(f64, f64)> {
    if !(alpha_sigma2 > 0.0) || !(beta_sigma2 > 0.0) {
        return Err(PmfvbError::invalid("Inverse-Gamma parameters must be positive"));
    }
    let t_len = cloud.dim() - 1;
    let m = cloud.num_particles() as f64;
    let r = alpha_sigma2 / beta_sigma2;

    let mut a1 = 0.0; // <1 - phi^2>
    let mut a2 = 0.0; // <(1 - phi)^2>
    let mut b1 = 0.0; // <(1 - phi^2) x_1>
    let mut b2 = 0.0; // <(1 - phi) sum_{t>=2} (x_t - phi x_{t-1})>
    for i in 0..cloud.num_particles() {
        let p = cloud.particle(i);
        let phi = p[0];
        let x = &p[1..];
        a1 += 1.0 - phi * phi;
        a2 += (1.0 - phi) * (1.0 - phi);
        b1 += (1.0 - phi * phi) * x[0];
        let mut s = 0.0;
        for t in 1..t_len {
            s += x[t] - phi * x[t - 1];
        }
        b2 += (1.0 - phi) * s;
    }
    a1 /= m;
    a2 /= m;
    b1 /= m;
    b2 /= m;

    let a = 1.0 / priors.sigma0_sq + r * a1 + (t_len as f64 - 1.0) * r * a2;
    let b_factor = match variant {
        BVariant::Uncorrected => t_len as f64 - 1.0,
        BVariant::Corrected => 1.0,
    };
    let b = r * b1 + b_factor * r * b2;
    if !(a > 0.0) || !b.is_finite() {
        return Err(PmfvbError::NumericalFailure {
            block: "q(mu)".into(),
            particle: 0,
            detail: format!("degenerate precision A={a}"),
        });
    }
    Ok((b / a, 1.0 / a))
}

/// Closed-form update of q(sigma^2). Returns (alpha_sigma2, beta_sigma2);
/// the shape is constant alpha0 + T/2.
pub fn update_q_sigma2(
    cloud: &ParticleCloud,
    mu_q: f64,
    sigma_q_sq: f64,
    priors: &SvPriors,
) -> (f64, f64) {
    let t_len = cloud.dim() - 1;
    let m = cloud.num_particles() as f64;
    let alpha = priors.alpha0 + t_len as f64 / 2.0;

    let mut acc = 0.0;
    for i in 0..cloud.num_particles() {
        let p = cloud.particle(i);
        let phi = p[0];
        let x = &p[1..];
        let d1 = x[0] - mu_q;
        acc += (1.0 - phi * phi) * (d1 * d1 + sigma_q_sq);
        let om = 1.0 - phi;
        for t in 1..t_len {
            let r = x[t] - mu_q * om - phi * x[t - 1];
            acc += r * r + om * om * sigma_q_sq;
        }
    }
    let beta = priors.beta0 + 0.5 * acc / m;
    (alpha, beta)
}

/// Integrated log-density of the LMC factor q(phi, x), up to a constant.
/// Averaging over q(mu) and q(sigma^2) replaces 1/sigma^2 by alpha/beta
/// and adds the sigma_q_sq spread terms.
pub fn log_q_phi_x(
    phi: f64,
    x: &[f64],
    params: &SvFactorParams,
    priors: &SvPriors,
    data: &SvData,
) -> Result<f64> {
    if phi.abs() >= 1.0 {
        return Err(PmfvbError::Domain(format!("phi={phi} outside (-1, 1)")));
    }
    let t_len = data.len();
    let r = params.alpha_sigma2 / params.beta_sigma2;
    let mu = params.mu_q;
    let sq = params.sigma_q_sq;

    let mut lq = (priors.a0 - 1.0) * (1.0 + phi).ln()
        + (priors.b0 - 1.0) * (1.0 - phi).ln()
        + 0.5 * (1.0 - phi * phi).ln();
    let d1 = x[0] - mu;
    lq -= 0.5 * r * (1.0 - phi * phi) * (d1 * d1 + sq);
    let om = 1.0 - phi;
    for t in 1..t_len {
        let resid = x[t] - mu * om - phi * x[t - 1];
        lq -= 0.5 * r * (resid * resid + om * om * sq);
    }
    for t in 0..t_len {
        lq -= 0.5 * x[t] + 0.5 * data.y[t] * data.y[t] * (-x[t]).exp();
    }
    Ok(lq)
}

/// d/dphi of `log_q_phi_x`.
pub fn grad_phi_logq(
    phi: f64,
    x: &[f64],
    params: &SvFactorParams,
    priors: &SvPriors,
) -> Result<f64> {
    if phi.abs() >= 1.0 {
        return Err(PmfvbError::Domain(format!("phi={phi} outside (-1, 1)")));
    }
    let r = params.alpha_sigma2 / params.beta_sigma2;
    let mu = params.mu_q;
    let sq = params.sigma_q_sq;
    let t_len = x.len();

    let d1 = x[0] - mu;
    let mut g = (priors.a0 - 1.0) / (1.0 + phi) - (priors.b0 - 1.0) / (1.0 - phi)
        - phi / (1.0 - phi * phi)
        + phi * r * (d1 * d1 + sq);
    for t in 1..t_len {
        let prev = x[t - 1] - mu;
        let cur = x[t] - mu;
        g += r * (prev * cur - phi * prev * prev + (1.0 - phi) * sq);
    }
    Ok(g)
}

/// Gradient of `log_q_phi_x` w.r.t. the latent path x_{1:T}.
pub fn grad_x_logq(
    phi: f64,
    x: &[f64],
    params: &SvFactorParams,
    data: &SvData,
) -> Vec<f64> {
    let t_len = x.len();
    let r = params.alpha_sigma2 / params.beta_sigma2;
    let mu = params.mu_q;
    let om = 1.0 - phi;
    let resid = |t: usize| x[t] - mu * om - phi * x[t - 1];

    let mut g = vec![0.0; t_len];
    for t in 0..t_len {
        g[t] = -0.5 + 0.5 * data.y[t] * data.y[t] * (-x[t]).exp();
    }
    g[0] -= r * (1.0 - phi * phi) * (x[0] - mu);
    if t_len > 1 {
        g[0] += phi * r * resid(1);
    }
    for t in 1..t_len {
        g[t] -= r * resid(t);
        if t + 1 < t_len {
            g[t] += phi * r * resid(t + 1);
        }
    }
    g
}

/// Unnormalized joint log posterior of (mu, phi, sigma2, x_{1:T}),
/// including all theta-dependent normalization terms.
pub fn sv_log_joint(
    mu: f64,
    phi: f64,
    sigma2: f64,
    x: &[f64],
    data: &SvData,
    priors: &SvPriors,
) -> f64 {
    let t_len = data.len();
    if phi.abs() >= 1.0 || !(sigma2 > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut lp = -mu * mu / (2.0 * priors.sigma0_sq);
    lp += (priors.a0 - 1.0) * (1.0 + phi).ln() + (priors.b0 - 1.0) * (1.0 - phi).ln();
    lp += -(1.0 + priors.alpha0) * sigma2.ln() - priors.beta0 / sigma2;

    // x_1 ~ N(mu, sigma2 / (1 - phi^2))
    let d1 = x[0] - mu;
    lp += 0.5 * (1.0 - phi * phi).ln() - 0.5 * sigma2.ln()
        - (1.0 - phi * phi) * d1 * d1 / (2.0 * sigma2);
    let om = 1.0 - phi;
    for t in 1..t_len {
        let r = x[t] - mu * om - phi * x[t - 1];
        lp += -0.5 * sigma2.ln() - r * r / (2.0 * sigma2);
    }
    for t in 0..t_len {
        lp += -0.5 * x[t] - 0.5 * data.y[t] * data.y[t] * (-x[t]).exp();
    }
    lp
}

/// Gradient of `sv_log_joint` w.r.t. [mu, phi, sigma2, x_1..x_T].
pub fn sv_log_joint_grad(
    mu: f64,
    phi: f64,
    sigma2: f64,
    x: &[f64],
    data: &SvData,
    priors: &SvPriors,
) -> Vec<f64> {
    let t_len = data.len();
    let om = 1.0 - phi;
    let inv_s = 1.0 / sigma2;
    let resid = |t: usize| x[t] - mu * om - phi * x[t - 1];
    let d1 = x[0] - mu;

    let mut g = vec![0.0; 3 + t_len];

    // mu
    let mut gmu = -mu / priors.sigma0_sq + (1.0 - phi * phi) * d1 * inv_s;
    for t in 1..t_len {
        gmu += om * resid(t) * inv_s;
    }
    g[0] = gmu;

    // phi
    let mut gphi = (priors.a0 - 1.0) / (1.0 + phi) - (priors.b0 - 1.0) / (1.0 - phi)
        - phi / (1.0 - phi * phi)
        + phi * d1 * d1 * inv_s;
    for t in 1..t_len {
        gphi += resid(t) * (x[t - 1] - mu) * inv_s;
    }
    g[1] = gphi;

    // sigma2
    let mut gs = -(1.0 + priors.alpha0) * inv_s + priors.beta0 * inv_s * inv_s
        - 0.5 * t_len as f64 * inv_s
        + 0.5 * (1.0 - phi * phi) * d1 * d1 * inv_s * inv_s;
    for t in 1..t_len {
        let r = resid(t);
        gs += 0.5 * r * r * inv_s * inv_s;
    }
    g[2] = gs;

    // latent path
    for t in 0..t_len {
        g[3 + t] = -0.5 + 0.5 * data.y[t] * data.y[t] * (-x[t]).exp();
    }
    g[3] -= (1.0 - phi * phi) * d1 * inv_s;
    if t_len > 1 {
        g[3] += phi * resid(1) * inv_s;
    }
    for t in 1..t_len {
        g[3 + t] -= resid(t) * inv_s;
        if t + 1 < t_len {
            g[3 + t] += phi * resid(t + 1) * inv_s;
        }
    }
    g
}

/// Reflect phi back into (-1 + margin, 1 - margin).
pub fn reflect_phi(mut phi: f64) -> f64 {
    let lim = 1.0 - PHI_MARGIN;
    while phi > lim || phi < -lim {
        if phi > lim {
            phi = 2.0 * lim - phi;
        } else {
            phi = -2.0 * lim - phi;
        }
    }
    phi
}

/// Simulate a return series from the SV model.
pub fn generate_sv_data(t_len: usize, mu: f64, phi: f64, sigma: f64, seed: u64) -> Result<SvData> {
    if phi.abs() >= 1.0 {
        return Err(PmfvbError::invalid("|phi| must be < 1"));
    }
    if !(sigma >= 0.0) || t_len < 2 {
        return Err(PmfvbError::invalid("need sigma >= 0 and T >= 2"));
    }
    const PHASE_GEN: u64 = 0x11;
    let mut rng = crate::rng::substream(seed, PHASE_GEN, 0, 0, 0);
    let mut x = mu + sigma / (1.0 - phi * phi).sqrt() * rng.sample::<f64, _>(StandardNormal);
    let mut y = Vec::with_capacity(t_len);
    for t in 0..t_len {
        if t > 0 {
            x = mu * (1.0 - phi) + phi * x + sigma * rng.sample::<f64, _>(StandardNormal);
        }
        y.push((0.5 * x).exp() * rng.sample::<f64, _>(StandardNormal));
    }
    SvData::new(y)
}

/// Run PMFVB on the SV model: per iteration, refresh q(mu) then
/// q(sigma^2) from the current particles, then take one LMC step on the
/// (phi, x) cloud and reflect phi at the boundary. The lower bound pairs
/// each particle with one draw from the analytic factors.
pub fn run_pmfvb_sv(
    data: &SvData,
    priors: &SvPriors,
    num_particles: usize,
    cfg: &LmcConfig,
    rule: &StoppingRule,
    variant: BVariant,
) -> Result<(SvVariationalState, RunTrace)> {
    priors.validate()?;
    rule.validate()?;
    cfg.validate(num_particles)?;
    let t_len = data.len();
    let dim = 1 + t_len;

    let phi_prior = Beta::new(priors.a0, priors.b0)
        .map_err(|e| PmfvbError::invalid(format!("invalid Beta prior: {e}")))?;

    // Latent paths start at a smoothed quasi-ML estimate: log y_t^2 has
    // mean x_t + E[log chi^2_1] ~ x_t - 1.27, and a +-5 moving average
    // suppresses the log-chi^2 noise (variance pi^2/2). Starting from
    // white noise instead lets q(sigma^2) absorb that noise and traps
    // the ascent in a phi ~ 0 mode.
    let raw: Vec<f64> = data.y.iter().map(|&v| (v * v + 1e-4).ln() + 1.27).collect();
    let x_init: Vec<f64> = (0..t_len)
        .map(|t| {
            let lo = t.saturating_sub(5);
            let hi = (t + 6).min(t_len);
            raw[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();

    let init_ctx = StreamCtx::new(cfg.seed, 0, 0);
    let mut cloud = ParticleCloud::from_sampler("phi-x", num_particles, dim, |i| {
        let mut rng = init_ctx.particle_rng(PHASE_INIT, i);
        let mut row = Vec::with_capacity(dim);
        row.push(reflect_phi(2.0 * phi_prior.sample(&mut rng) - 1.0));
        for t in 0..t_len {
            row.push(x_init[t] + 0.3 * rng.sample::<f64, _>(StandardNormal));
        }
        row
    })?;

    // Analytic factors start at prior moments.
    let mut params = SvFactorParams {
        mu_q: 0.0,
        sigma_q_sq: priors.sigma0_sq,
        alpha_sigma2: priors.alpha0,
        beta_sigma2: priors.beta0,
    };

    let mut trace = RunTrace::new(rule.window);
    trace.truncated = true;
    let start = std::time::Instant::now();

    for t in 0..cfg.max_iters {
        let (mu_q, sigma_q_sq) = update_q_mu(
            &cloud,
            params.alpha_sigma2,
            params.beta_sigma2,
            priors,
            variant,
        )?;
        params.mu_q = mu_q;
        params.sigma_q_sq = sigma_q_sq;
        let (alpha, beta) = update_q_sigma2(&cloud, mu_q, sigma_q_sq, priors);
        params.alpha_sigma2 = alpha;
        params.beta_sigma2 = beta;

        let ctx = StreamCtx::new(cfg.seed, t as u64 + 1, 0);
        let p = params;
        let updated = lmc_block_update(
            &cloud,
            &[],
            |own, _| {
                let phi = own[0];
                let x = &own[1..];
                let mut g = Vec::with_capacity(own.len());
                g.push(grad_phi_logq(phi, x, &p, priors).unwrap_or(f64::NAN));
                g.extend(grad_x_logq(phi, x, &p, data));
                g
            },
            cfg,
            ctx,
        )?;
        cloud = updated;
        for i in 0..num_particles {
            let row = cloud.particle_mut(i);
            row[0] = reflect_phi(row[0]);
        }

        // Lower bound on the joint, pairing each particle with one draw
        // of (mu, sigma^2) from the analytic factors.
        let gauss = AnalyticFactor::Gaussian {
            mean: params.mu_q,
            var: params.sigma_q_sq,
        };
        let ig = AnalyticFactor::InverseGamma {
            shape: params.alpha_sigma2,
            rate: params.beta_sigma2,
        };
        let lb_ctx = StreamCtx::new(cfg.seed, t as u64 + 1, 0);
        let m = num_particles as f64;
        let mut sum = 0.0;
        for i in 0..num_particles {
            let mut rng = lb_ctx.particle_rng(PHASE_LOWER_BOUND, i);
            let mu_i = gauss.sample(&mut rng);
            let s2_i = ig.sample(&mut rng);
            let row = cloud.particle(i);
            let v = sv_log_joint(mu_i, row[0], s2_i, &row[1..], data, priors);
            if !v.is_finite() {
                return Err(PmfvbError::NumericalFailure {
                    block: "phi-x".into(),
                    particle: i,
                    detail: "non-finite joint log density in lower bound".into(),
                });
            }
            sum += v;
        }
        let lower_bound = sum / m + m.ln();
        trace.push(lower_bound, None, start.elapsed().as_millis() as u64);

        if check_stop(&trace, rule)? {
            trace.truncated = false;
            break;
        }
    }

    Ok((SvVariationalState { params, cloud }, trace))
}

/// Serializable summary of a fitted SV variational state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvStateSummary {
    pub mu_q: f64,
    pub sigma_q_sq: f64,
    pub alpha_sigma2: f64,
    pub beta_sigma2: f64,
    pub sigma2_mean: f64,
    pub phi_mean: f64,
    pub phi_quantiles: [f64; 3],
}

impl SvStateSummary {
    pub fn from_state(state: &SvVariationalState) -> Self {
        let m = state.cloud.num_particles();
        let mut phis: Vec<f64> = (0..m).map(|i| state.cloud.particle(i)[0]).collect();
        phis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| phis[((p * (m - 1) as f64).round() as usize).min(m - 1)];
        SvStateSummary {
            mu_q: state.params.mu_q,
            sigma_q_sq: state.params.sigma_q_sq,
            alpha_sigma2: state.params.alpha_sigma2,
            beta_sigma2: state.params.beta_sigma2,
            sigma2_mean: state.params.beta_sigma2 / (state.params.alpha_sigma2 - 1.0),
            phi_mean: phis.iter().sum::<f64>() / m as f64,
            phi_quantiles: [q(0.05), q(0.5), q(0.95)],
        }
    }
}
