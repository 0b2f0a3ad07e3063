//! Small fully connected network with tanh hidden layers and a linear
//! scalar output, plus exact reverse-mode gradients of the data
//! log-likelihood. Weights are a flat vector: for each layer, the
//! out-by-in weight matrix row-major, then the `out` biases.

use serde::{Deserialize, Serialize};

use crate::error::{PmfvbError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    /// Layer widths, input first: e.g. [20, 10, 1].
    pub layers: Vec<usize>,
}

impl MlpModel {
    pub fn new(layers: Vec<usize>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(PmfvbError::invalid("need at least input and output layers"));
        }
        if layers.iter().any(|&w| w == 0) {
            return Err(PmfvbError::invalid("layer widths must be positive"));
        }
        if *layers.last().unwrap() != 1 {
            return Err(PmfvbError::invalid("output layer must be scalar"));
        }
        Ok(MlpModel { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    /// Total weight count including biases.
    pub fn num_weights(&self) -> usize {
        self.layers
            .windows(2)
            .map(|lw| (lw[0] + 1) * lw[1])
            .sum()
    }

    /// Scalar network output eta(x, w).
    pub fn forward(&self, w: &[f64], x: &[f64]) -> Result<f64> {
        if w.len() != self.num_weights() || x.len() != self.input_dim() {
            return Err(PmfvbError::invalid("weight or input dimension mismatch"));
        }
        let mut act = x.to_vec();
        let mut off = 0;
        let n_layers = self.layers.len() - 1;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &w[off + o * n_in..off + (o + 1) * n_in];
                let mut s = w[off + n_out * n_in + o]; // bias
                for (wi, ai) in row.iter().zip(&act) {
                    s += wi * ai;
                }
                next[o] = if l + 1 < n_layers { s.tanh() } else { s };
            }
            off += (n_in + 1) * n_out;
            act = next;
        }
        Ok(act[0])
    }

    /// Forward pass keeping activations, then reverse sweep: returns
    /// (eta, d eta / d w).
    pub fn grad_eta(&self, w: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if w.len() != self.num_weights() || x.len() != self.input_dim() {
            return Err(PmfvbError::invalid("weight or input dimension mismatch"));
        }
        let n_layers = self.layers.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        let mut offsets = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            offsets.push(off);
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let prev = &acts[l];
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &w[off + o * n_in..off + (o + 1) * n_in];
                let mut s = w[off + n_out * n_in + o];
                for (wi, ai) in row.iter().zip(prev) {
                    s += wi * ai;
                }
                next[o] = if l + 1 < n_layers { s.tanh() } else { s };
            }
            off += (n_in + 1) * n_out;
            acts.push(next);
        }
        let eta = acts[n_layers][0];

        let mut grad = vec![0.0; w.len()];
        // delta = d eta / d (post-activation of current layer)
        let mut delta = vec![1.0];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let off = offsets[l];
            // d eta / d pre-activation
            let dpre: Vec<f64> = if l + 1 < n_layers {
                acts[l + 1]
                    .iter()
                    .zip(&delta)
                    .map(|(&a, &d)| d * (1.0 - a * a))
                    .collect()
            } else {
                delta.clone()
            };
            let prev = &acts[l];
            let mut prev_delta = vec![0.0; n_in];
            for o in 0..n_out {
                let d = dpre[o];
                for i in 0..n_in {
                    grad[off + o * n_in + i] = d * prev[i];
                    prev_delta[i] += d * w[off + o * n_in + i];
                }
                grad[off + n_out * n_in + o] = d;
            }
            delta = prev_delta;
        }
        Ok((eta, grad))
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Log-likelihood of one example under unit noise precision.
pub fn loglik_term(task: Task, eta: f64, y: f64) -> f64 {
    match task {
        Task::Regression => -0.5 * (y - eta) * (y - eta),
        Task::Classification => y * eta - softplus(eta),
    }
}

/// Gradient of the summed data log-likelihood over the given rows, with
/// unit noise precision for regression (the `1/sigma^2` factor is applied
/// by the caller).
pub fn mlp_backward(
    model: &MlpModel,
    w: &[f64],
    xs: &[&[f64]],
    ys: &[f64],
    task: Task,
) -> Result<Vec<f64>> {
    if xs.len() != ys.len() {
        return Err(PmfvbError::invalid("feature/response length mismatch"));
    }
    let mut total = vec![0.0; model.num_weights()];
    for (x, &y) in xs.iter().zip(ys) {
        let (eta, geta) = model.grad_eta(w, x)?;
        let coeff = match task {
            Task::Regression => y - eta,
            Task::Classification => y - sigmoid(eta),
        };
        for (t, g) in total.iter_mut().zip(&geta) {
            *t += coeff * g;
        }
    }
    Ok(total)
}
