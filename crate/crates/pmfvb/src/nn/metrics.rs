//! Point prediction at the cloud-mean weights and held-out scores.

use serde::{Deserialize, Serialize};

use crate::engine::ParticleCloud;
use crate::error::{PmfvbError, Result};
use crate::nn::mlp::{sigmoid, MlpModel, Task};

/// Predictive mean (regression) or class-1 probability (classification),
/// evaluated at the posterior-mean weight vector.
pub fn predict(cloud: &ParticleCloud, model: &MlpModel, x: &[f64], task: Task) -> Result<f64> {
    let w = cloud.mean();
    let eta = model.forward(&w, x)?;
    Ok(match task {
        Task::Regression => eta,
        Task::Classification => sigmoid(eta),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metrics {
    /// Negative mean log predictive density.
    pub pps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mcr: Option<f64>,
}

/// Score aligned predictions against truth. `noise_var` is the plug-in
/// observation variance for the regression log score; ignored for
/// classification.
pub fn metrics(task: Task, preds: &[f64], truth: &[f64], noise_var: f64) -> Result<Metrics> {
    if preds.is_empty() || preds.len() != truth.len() {
        return Err(PmfvbError::invalid("predictions and truth must align and be non-empty"));
    }
    let n = preds.len() as f64;
    match task {
        Task::Regression => {
            if !(noise_var > 0.0) {
                return Err(PmfvbError::invalid("noise variance must be positive"));
            }
            let mse = preds
                .iter()
                .zip(truth)
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / n;
            let pps = 0.5 * (2.0 * std::f64::consts::PI * noise_var).ln()
                + mse / (2.0 * noise_var);
            Ok(Metrics { pps, mse: Some(mse), mcr: None })
        }
        Task::Classification => {
            let mut nll = 0.0;
            let mut wrong = 0usize;
            for (&p, &y) in preds.iter().zip(truth) {
                let p = p.clamp(1e-12, 1.0 - 1e-12);
                nll -= if y > 0.5 { p.ln() } else { (1.0 - p).ln() };
                if (p >= 0.5) != (y > 0.5) {
                    wrong += 1;
                }
            }
            Ok(Metrics {
                pps: nll / n,
                mse: None,
                mcr: Some(wrong as f64 / n),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn perfect_classifier_scores_zero() {
        let m = metrics(Task::Classification, &[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0], 1.0).unwrap();
        assert!(m.pps < 1e-10);
        assert_eq!(m.mcr, Some(0.0));
    }

    #[test]
    fn coin_flip_classifier() {
        let preds = vec![0.5; 1000];
        let truth: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
        let m = metrics(Task::Classification, &preds, &truth, 1.0).unwrap();
        assert_relative_eq!(m.pps, std::f64::consts::LN_2, max_relative = 1e-12);
        assert_relative_eq!(m.mcr.unwrap(), 0.5, epsilon = 0.01);
    }

    #[test]
    fn exact_regression_fit() {
        let y = [1.0, -2.0, 0.3];
        let s2 = 0.7;
        let m = metrics(Task::Regression, &y, &y, s2).unwrap();
        assert_eq!(m.mse, Some(0.0));
        assert_relative_eq!(
            m.pps,
            0.5 * (2.0 * std::f64::consts::PI * s2).ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn predict_reduces_to_forward_for_identical_particles() {
        let model = MlpModel::new(vec![2, 2, 1]).unwrap();
        let w = vec![0.3; model.num_weights()];
        let cloud = ParticleCloud::new("w", 4, w.len(), w.repeat(4)).unwrap();
        let x = [0.5, -0.9];
        let p = predict(&cloud, &model, &x, Task::Regression).unwrap();
        assert_relative_eq!(p, model.forward(&w, &x).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn predict_symmetric_cloud_linear_net() {
        let model = MlpModel::new(vec![2, 1]).unwrap();
        let cloud =
            ParticleCloud::new("w", 2, 3, vec![0.4, -0.2, 0.9, -0.4, 0.2, -0.9]).unwrap();
        let p = predict(&cloud, &model, &[1.0, 1.0], Task::Regression).unwrap();
        assert!(p.abs() < 1e-14);
    }

    #[test]
    fn two_particle_mean_by_hand() {
        let model = MlpModel::new(vec![1, 1]).unwrap();
        // particles (w, b): (1, 0) and (3, 2) -> mean (2, 1).
        let cloud = ParticleCloud::new("w", 2, 2, vec![1.0, 0.0, 3.0, 2.0]).unwrap();
        let p = predict(&cloud, &model, &[2.0], Task::Regression).unwrap();
        assert_relative_eq!(p, 5.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_empty() {
        assert!(metrics(Task::Regression, &[], &[], 1.0).is_err());
    }
}
