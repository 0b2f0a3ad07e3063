//! Particle estimate of the variational lower bound: the energy term
//! averaged over index-paired particles plus the constant entropy `log M`.

use crate::engine::cloud::ParticleCloud;
use crate::error::{PmfvbError, Result};
use crate::par;

/// `(1/M) sum_i log pi~(theta_i) + log M`, where `theta_i` concatenates
/// the index-`i` particle of every block.
pub fn estimate_lower_bound<F>(clouds: &[&ParticleCloud], log_unnorm_target: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if clouds.is_empty() {
        return Err(PmfvbError::invalid("no clouds supplied"));
    }
    let m = clouds[0].num_particles();
    if clouds.iter().any(|c| c.num_particles() != m) {
        return Err(PmfvbError::invalid("clouds must share the particle count M"));
    }
    let total_dim: usize = clouds.iter().map(|c| c.dim()).sum();

    let logs: Vec<f64> = par::collect_indexed(m, |i| {
        let mut theta = Vec::with_capacity(total_dim);
        for c in clouds {
            theta.extend_from_slice(c.particle(i));
        }
        log_unnorm_target(&theta)
    });

    // Deterministic sequential reduction.
    let mut sum = 0.0;
    for (i, v) in logs.iter().enumerate() {
        if !v.is_finite() {
            return Err(PmfvbError::NumericalFailure {
                block: "lower-bound".into(),
                particle: i,
                detail: "non-finite log target".into(),
            });
        }
        sum += v;
    }
    Ok(sum / m as f64 + (m as f64).ln())
}
