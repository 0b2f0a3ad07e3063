//! Algorithm driver: alternating block updates with trace recording and
//! stopping-rule checks.

use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::analytic::AnalyticFactor;
use crate::engine::cloud::ParticleCloud;
use crate::engine::lmc::{lmc_block_update, LmcConfig};
use crate::engine::lower_bound::estimate_lower_bound;
use crate::engine::stopping::{check_stop, RunTrace, StoppingRule};
use crate::error::{PmfvbError, Result};
use crate::rng::{StreamCtx, PHASE_INIT, PHASE_UPDATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Updated by a Langevin Monte Carlo particle move.
    Lmc,
    /// Updated by a closed-form factor refresh; the cloud is resampled
    /// from the refreshed factor so index pairing stays meaningful.
    Analytic,
}

#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub id: String,
    pub dim: usize,
    pub kind: BlockKind,
}

impl BlockSpec {
    pub fn lmc(id: impl Into<String>, dim: usize) -> Self {
        BlockSpec {
            id: id.into(),
            dim,
            kind: BlockKind::Lmc,
        }
    }

    pub fn analytic(id: impl Into<String>, dim: usize) -> Self {
        BlockSpec {
            id: id.into(),
            dim,
            kind: BlockKind::Analytic,
        }
    }
}

/// A factorized target: per-block gradients of the unnormalized joint
/// log-density, plus closed-form factor updates for analytic blocks.
pub trait FactorizedTarget: Sync {
    fn blocks(&self) -> Vec<BlockSpec>;

    /// Unnormalized joint log-density at the concatenated parameter.
    fn log_unnorm_joint(&self, theta: &[f64]) -> f64;

    /// Gradient of the joint log-density w.r.t. block `block`, evaluated
    /// at its own value and one particle of each other block (in block
    /// order, skipping `block`).
    fn block_grad(&self, block: usize, own: &[f64], others: &[&[f64]]) -> Vec<f64>;

    /// Closed-form factor parameters for an analytic block, computed from
    /// the current clouds. Must return `Some` for every analytic block.
    fn analytic_update(&self, _block: usize, _clouds: &[ParticleCloud]) -> Option<AnalyticFactor> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct PmfvbRun {
    pub clouds: Vec<ParticleCloud>,
    pub trace: RunTrace,
}

/// Run the particle MFVB loop: initialize per-block clouds, then per
/// iteration update blocks in declaration order (each block sees the
/// other blocks' most recent state), record the lower bound, and stop
/// when the rule fires or `max_iters` is reached (trace is then flagged
/// truncated).
pub fn run_pmfvb<T, I>(
    target: &T,
    init: I,
    num_particles: usize,
    cfg: &LmcConfig,
    rule: &StoppingRule,
) -> Result<PmfvbRun>
where
    T: FactorizedTarget,
    I: Fn(usize, &mut ChaCha8Rng) -> Vec<f64>,
{
    rule.validate()?;
    cfg.validate(num_particles)?;
    let blocks = target.blocks();
    if blocks.is_empty() {
        return Err(PmfvbError::invalid("target declares no blocks"));
    }

    let mut clouds: Vec<ParticleCloud> = Vec::with_capacity(blocks.len());
    for (b, spec) in blocks.iter().enumerate() {
        let cloud = ParticleCloud::from_sampler(spec.id.clone(), num_particles, spec.dim, |i| {
            let mut rng = StreamCtx::new(cfg.seed, 0, b as u64).particle_rng(PHASE_INIT, i);
            init(b, &mut rng)
        })?;
        clouds.push(cloud);
    }

    let mut trace = RunTrace::new(rule.window);
    trace.truncated = true;
    let start = Instant::now();

    for t in 0..cfg.max_iters {
        for (b, spec) in blocks.iter().enumerate() {
            match spec.kind {
                BlockKind::Analytic => {
                    let factor = target.analytic_update(b, &clouds).ok_or_else(|| {
                        PmfvbError::invalid(format!(
                            "analytic block `{}` returned no factor update",
                            spec.id
                        ))
                    })?;
                    factor.validate()?;
                    let ctx = StreamCtx::new(cfg.seed, t as u64 + 1, b as u64);
                    let refreshed =
                        ParticleCloud::from_sampler(spec.id.clone(), num_particles, spec.dim, |i| {
                            let mut rng = ctx.particle_rng(PHASE_UPDATE, i);
                            (0..spec.dim).map(|_| factor.sample(&mut rng)).collect()
                        })?;
                    clouds[b] = refreshed;
                }
                BlockKind::Lmc => {
                    let (own, others) = split_clouds(&clouds, b);
                    let updated = lmc_block_update(
                        own,
                        &others,
                        |x, ys| target.block_grad(b, x, ys),
                        cfg,
                        StreamCtx::new(cfg.seed, t as u64 + 1, b as u64),
                    )?;
                    clouds[b] = updated;
                }
            }
        }

        let refs: Vec<&ParticleCloud> = clouds.iter().collect();
        let lb = estimate_lower_bound(&refs, |theta| target.log_unnorm_joint(theta))?;
        trace.push(lb, None, start.elapsed().as_millis() as u64);

        if check_stop(&trace, rule)? {
            trace.truncated = false;
            break;
        }
    }

    Ok(PmfvbRun { clouds, trace })
}

fn split_clouds(clouds: &[ParticleCloud], b: usize) -> (&ParticleCloud, Vec<&ParticleCloud>) {
    let own = &clouds[b];
    let others: Vec<&ParticleCloud> = clouds
        .iter()
        .enumerate()
        .filter_map(|(j, c)| (j != b).then_some(c))
        .collect();
    (own, others)
}
