//! Langevin Monte Carlo block update: each particle moves by half a step
//! of the subsample-averaged cross-block gradient plus Gaussian noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::cloud::ParticleCloud;
use crate::error::{PmfvbError, Result};
use crate::par;
use crate::rng::{StreamCtx, PHASE_UPDATE};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmcConfig {
    /// Langevin step size `h`.
    pub step_size: f64,
    /// Size `m` of the random subsample of the other blocks' particles.
    pub subsample: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Optional max-norm gradient clipping (NN targets only by default).
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

impl LmcConfig {
    pub fn validate(&self, num_particles: usize) -> Result<()> {
        if !self.step_size.is_finite() || self.step_size < 0.0 {
            return Err(PmfvbError::invalid("step_size must be finite and >= 0"));
        }
        if self.subsample == 0 || self.subsample > num_particles {
            return Err(PmfvbError::invalid(format!(
                "subsample m={} must satisfy 1 <= m <= M={}",
                self.subsample, num_particles
            )));
        }
        Ok(())
    }
}

/// Draw `m` distinct indices from `[0, M)` uniformly without replacement.
/// `m == M` returns `0..M` in order without consuming the generator.
pub fn subsample_indices(num: usize, m: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if m == 0 || m > num {
        return Err(PmfvbError::invalid(format!(
            "subsample size m={m} must satisfy 1 <= m <= M={num}"
        )));
    }
    if m == num {
        return Ok((0..num).collect());
    }
    Ok(rand::seq::index::sample(rng, num, m).into_vec())
}

/// One LMC half-iteration for `cloud` against the current state of the
/// other blocks. Each particle draws its own subsample and noise from its
/// `(seed, iter, block, particle)` substream; the input cloud is not
/// mutated. With no other blocks the drift is a single gradient call.
pub fn lmc_block_update<G>(
    cloud: &ParticleCloud,
    other_clouds: &[&ParticleCloud],
    grad: G,
    cfg: &LmcConfig,
    ctx: StreamCtx,
) -> Result<ParticleCloud>
where
    G: Fn(&[f64], &[&[f64]]) -> Vec<f64> + Sync,
{
    let m_particles = cloud.num_particles();
    cfg.validate(m_particles)?;
    for other in other_clouds {
        if other.num_particles() != m_particles {
            return Err(PmfvbError::invalid(
                "all blocks of one run must share the particle count M",
            ));
        }
    }
    let dim = cloud.dim();
    let half_h = cfg.step_size / 2.0;
    let sqrt_h = cfg.step_size.sqrt();

    let rows: Vec<Result<Vec<f64>>> = par::collect_indexed(m_particles, |i| {
        update_particle(
            cloud, other_clouds, &grad, cfg, ctx, i, dim, half_h, sqrt_h,
        )
    });

    let mut values = Vec::with_capacity(m_particles * dim);
    for row in rows {
        values.extend_from_slice(&row?);
    }
    ParticleCloud::new(cloud.block_id.clone(), m_particles, dim, values)
}

#[allow(clippy::too_many_arguments)]
fn update_particle<G>(
    cloud: &ParticleCloud,
    other_clouds: &[&ParticleCloud],
    grad: &G,
    cfg: &LmcConfig,
    ctx: StreamCtx,
    i: usize,
    dim: usize,
    half_h: f64,
    sqrt_h: f64,
) -> Result<Vec<f64>>
where
    G: Fn(&[f64], &[&[f64]]) -> Vec<f64> + Sync,
{
    let mut rng = ctx.particle_rng(PHASE_UPDATE, i);
    let own = cloud.particle(i);

    let mut drift = if other_clouds.is_empty() {
        grad(own, &[])
    } else {
        let idx = subsample_indices(cloud.num_particles(), cfg.subsample, &mut rng)?;
        let mut acc = vec![0.0; dim];
        let mut others: Vec<&[f64]> = Vec::with_capacity(other_clouds.len());
        for &k in &idx {
            others.clear();
            others.extend(other_clouds.iter().map(|c| c.particle(k)));
            let g = grad(own, &others);
            debug_assert_eq!(g.len(), dim);
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += v;
            }
        }
        let inv = 1.0 / cfg.subsample as f64;
        acc.iter_mut().for_each(|v| *v *= inv);
        acc
    };

    if let Some(max_norm) = cfg.grad_clip {
        clip_max_norm(&mut drift, max_norm);
    }
    if drift.iter().any(|v| !v.is_finite()) {
        return Err(PmfvbError::NumericalFailure {
            block: cloud.block_id.clone(),
            particle: i,
            detail: "non-finite gradient in LMC update".into(),
        });
    }

    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        let eta: f64 = rng.sample(StandardNormal);
        out.push(own[j] + half_h * drift[j] + sqrt_h * eta);
    }
    Ok(out)
}

pub(crate) fn clip_max_norm(v: &mut [f64], max_norm: f64) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm.is_finite() && norm > max_norm {
        let s = max_norm / norm;
        v.iter_mut().for_each(|x| *x *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn cfg(h: f64, m: usize, seed: u64) -> LmcConfig {
        LmcConfig {
            step_size: h,
            subsample: m,
            max_iters: 100,
            seed,
            grad_clip: None,
        }
    }

    #[test]
    fn subsample_full_is_identity_order() {
        let mut rng = substream(1, PHASE_UPDATE, 0, 0, 0);
        let idx = subsample_indices(5, 5, &mut rng).unwrap();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn subsample_size_contract() {
        let mut rng = substream(9, PHASE_UPDATE, 0, 0, 0);
        let idx = subsample_indices(3000, 1, &mut rng).unwrap();
        assert_eq!(idx.len(), 1);
        assert!(idx[0] < 3000);
    }

    #[test]
    fn subsample_rejects_bad_sizes() {
        let mut rng = substream(1, PHASE_UPDATE, 0, 0, 0);
        assert!(subsample_indices(10, 0, &mut rng).is_err());
        assert!(subsample_indices(10, 11, &mut rng).is_err());
    }

    #[test]
    fn subsample_uniform_inclusion_frequency() {
        // P(index included) = m/M = 0.4 for M=10, m=4.
        let mut counts = [0u32; 10];
        let draws = 100_000;
        for t in 0..draws {
            let mut rng = substream(7, PHASE_UPDATE, t, 0, 0);
            for k in subsample_indices(10, 4, &mut rng).unwrap() {
                counts[k] += 1;
            }
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.4).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let cloud = ParticleCloud::new("x", 3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let other = ParticleCloud::new("y", 3, 1, vec![0.1, 0.2, 0.3]).unwrap();
        let out = lmc_block_update(
            &cloud,
            &[&other],
            |x, _| vec![x[0], x[1]],
            &cfg(0.0, 2, 5),
            StreamCtx::new(5, 0, 0),
        )
        .unwrap();
        assert_eq!(out.values(), cloud.values());
    }

    #[test]
    fn zero_drift_noise_scale() {
        // grad == 0, h = 0.01: X' = X + 0.1 eta. Mean of (X'-X)/0.1 ~ 0.
        let n = 100_000;
        let cloud = ParticleCloud::new("x", n, 1, vec![0.0; n]).unwrap();
        let out = lmc_block_update(
            &cloud,
            &[],
            |_, _| vec![0.0],
            &cfg(0.01, 1, 11),
            StreamCtx::new(11, 0, 0),
        )
        .unwrap();
        let mean: f64 = out.values().iter().sum::<f64>() / n as f64 / 0.1;
        assert!(mean.abs() < 0.02, "mean {mean}");
        let var: f64 = out.values().iter().map(|v| v * v).sum::<f64>() / n as f64 / 0.01;
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn full_subsample_matches_brute_force_bitwise() {
        // m = M with a linear gradient: drift equals the exhaustive
        // average computed by an independent naive loop, bit for bit.
        let m = 64;
        let seed = 17;
        let h = 0.05;
        let xs: Vec<f64> = (0..m).map(|i| (i as f64) * 0.01 - 0.3).collect();
        let ys: Vec<f64> = (0..m).map(|i| (i as f64) * 0.02 + 0.1).collect();
        let cloud = ParticleCloud::new("x", m, 1, xs.clone()).unwrap();
        let other = ParticleCloud::new("y", m, 1, ys.clone()).unwrap();
        let grad = |x: &[f64], others: &[&[f64]]| vec![-(x[0] - 0.5 * others[0][0])];
        let out = lmc_block_update(
            &cloud,
            &[&other],
            grad,
            &cfg(h, m, seed),
            StreamCtx::new(seed, 4, 0),
        )
        .unwrap();

        // Brute-force reference: same substream contract, naive loops.
        for i in 0..m {
            let mut rng = substream(seed, PHASE_UPDATE, 4, 0, i as u64);
            let mut acc = 0.0;
            for k in 0..m {
                acc += -(xs[i] - 0.5 * ys[k]);
            }
            acc /= m as f64;
            let eta: f64 = rng.sample(StandardNormal);
            let expect = xs[i] + h / 2.0 * acc + h.sqrt() * eta;
            assert_eq!(out.particle(i)[0], expect, "particle {i}");
        }
    }

    #[test]
    fn non_finite_gradient_reports_particle() {
        let cloud = ParticleCloud::new("blk", 3, 1, vec![0.0, 1.0, 2.0]).unwrap();
        let err = lmc_block_update(
            &cloud,
            &[],
            |x, _| vec![if x[0] > 1.5 { f64::NAN } else { 0.0 }],
            &cfg(0.1, 1, 3),
            StreamCtx::new(3, 0, 0),
        )
        .unwrap_err();
        match err {
            PmfvbError::NumericalFailure { block, particle, .. } => {
                assert_eq!(block, "blk");
                assert_eq!(particle, 2);
            }
            other => panic!("unexpected: {other}"),
        }
    }
}
