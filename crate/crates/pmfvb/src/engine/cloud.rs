use crate::error::{PmfvbError, Result};

/// Empirical representation of one variational factor: `M` particles of
/// dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub block_id: String,
    num_particles: usize,
    dim: usize,
    values: Vec<f64>,
}

impl ParticleCloud {
    pub fn new(block_id: impl Into<String>, num_particles: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if num_particles == 0 || dim == 0 {
            return Err(PmfvbError::invalid("cloud needs M >= 1 and dim >= 1"));
        }
        if values.len() != num_particles * dim {
            return Err(PmfvbError::invalid(format!(
                "cloud values length {} does not match {}x{}",
                values.len(),
                num_particles,
                dim
            )));
        }
        let block_id = block_id.into();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(PmfvbError::NumericalFailure {
                block: block_id,
                particle: pos / dim,
                detail: "non-finite entry in particle cloud".into(),
            });
        }
        Ok(ParticleCloud {
            block_id,
            num_particles,
            dim,
            values,
        })
    }

    /// Build a cloud by sampling each particle from `sample(i, ...)`.
    pub fn from_sampler(
        block_id: impl Into<String>,
        num_particles: usize,
        dim: usize,
        mut sample: impl FnMut(usize) -> Vec<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(num_particles * dim);
        for i in 0..num_particles {
            let row = sample(i);
            assert_eq!(row.len(), dim, "sampler returned wrong dimension");
            values.extend_from_slice(&row);
        }
        ParticleCloud::new(block_id, num_particles, dim, values)
    }

    pub fn num_particles(&self) -> usize {
        self.num_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particle_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Per-coordinate sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for row in self.values.chunks(self.dim) {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.num_particles as f64;
        m.iter_mut().for_each(|v| *v *= inv);
        m
    }

    /// Per-coordinate sample variance (denominator M).
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut v = vec![0.0; self.dim];
        for row in self.values.chunks(self.dim) {
            for ((acc, x), mu) in v.iter_mut().zip(row).zip(&mean) {
                let d = x - mu;
                *acc += d * d;
            }
        }
        let inv = 1.0 / self.num_particles as f64;
        v.iter_mut().for_each(|x| *x *= inv);
        v
    }

    /// Per-coordinate second raw moment.
    pub fn second_moment(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for row in self.values.chunks(self.dim) {
            for (acc, x) in v.iter_mut().zip(row) {
                *acc += x * x;
            }
        }
        let inv = 1.0 / self.num_particles as f64;
        v.iter_mut().for_each(|x| *x *= inv);
        v
    }

    pub fn assert_finite(&self) -> Result<()> {
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(PmfvbError::NumericalFailure {
                block: self.block_id.clone(),
                particle: pos / self.dim,
                detail: "non-finite particle value".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_mismatched() {
        assert!(ParticleCloud::new("b", 0, 1, vec![]).is_err());
        assert!(ParticleCloud::new("b", 2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let err = ParticleCloud::new("b", 2, 1, vec![0.0, f64::NAN]).unwrap_err();
        match err {
            PmfvbError::NumericalFailure { particle, .. } => assert_eq!(particle, 1),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn moments() {
        let c = ParticleCloud::new("b", 2, 2, vec![1.0, 0.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.mean(), vec![2.0, 2.0]);
        assert_eq!(c.variance(), vec![1.0, 4.0]);
        assert_eq!(c.second_moment(), vec![5.0, 8.0]);
    }
}
