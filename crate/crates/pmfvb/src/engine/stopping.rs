//! Run traces and stopping rules.

use serde::{Deserialize, Serialize};

use crate::error::{PmfvbError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopKind {
    /// Window-smoothed lower bound has stopped increasing.
    LowerBoundPlateau,
    /// Validation score has not improved for `patience` records.
    ValidationPatience,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppingRule {
    pub kind: StopKind,
    pub window: usize,
    pub patience: usize,
    pub tolerance: f64,
}

impl StoppingRule {
    pub fn lower_bound_plateau(window: usize, patience: usize, tolerance: f64) -> Self {
        StoppingRule {
            kind: StopKind::LowerBoundPlateau,
            window,
            patience,
            tolerance,
        }
    }

    pub fn validation_patience(patience: usize) -> Self {
        StoppingRule {
            kind: StopKind::ValidationPatience,
            window: 1,
            patience,
            tolerance: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.patience == 0 {
            return Err(PmfvbError::invalid("window and patience must be >= 1"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(PmfvbError::invalid("tolerance must be nonnegative"));
        }
        Ok(())
    }
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule::lower_bound_plateau(50, 100, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub lower_bound: f64,
    pub smoothed_lb: Option<f64>,
    pub val_score: Option<f64>,
    pub wall_ms: u64,
}

/// Per-iteration history of a run; input to the stopping rules.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub window: usize,
    pub records: Vec<TraceRecord>,
    /// Set when the run hit `max_iters` without the stopping rule firing.
    pub truncated: bool,
}

impl RunTrace {
    pub fn new(window: usize) -> Self {
        RunTrace {
            window: window.max(1),
            records: Vec::new(),
            truncated: false,
        }
    }

    /// Append a record; the smoothed value is defined once `window`
    /// records exist.
    pub fn push(&mut self, lower_bound: f64, val_score: Option<f64>, wall_ms: u64) {
        let iter = self.records.len() as u64;
        let smoothed = if self.records.len() + 1 >= self.window {
            let start = self.records.len() + 1 - self.window;
            let sum: f64 = self.records[start..]
                .iter()
                .map(|r| r.lower_bound)
                .sum::<f64>()
                + lower_bound;
            Some(sum / self.window as f64)
        } else {
            None
        };
        self.records.push(TraceRecord {
            iter,
            lower_bound,
            smoothed_lb: smoothed,
            val_score,
            wall_ms,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn smoothed_series(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| r.smoothed_lb)
            .collect()
    }

    /// CSV with header `iter,lower_bound,smoothed_lb,val_score,wall_ms`;
    /// optional fields serialize as empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,lower_bound,smoothed_lb,val_score,wall_ms\n");
        for r in &self.records {
            let sm = r.smoothed_lb.map(fmt_f64).unwrap_or_default();
            let vs = r.val_score.map(fmt_f64).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iter,
                fmt_f64(r.lower_bound),
                sm,
                vs,
                r.wall_ms
            ));
        }
        s
    }
}

fn fmt_f64(v: f64) -> String {
    // Shortest round-trip representation keeps traces byte-reproducible.
    format!("{v:?}")
}

/// Evaluate `rule` on `trace`.
pub fn check_stop(trace: &RunTrace, rule: &StoppingRule) -> Result<bool> {
    rule.validate()?;
    if trace.is_empty() {
        return Err(PmfvbError::invalid("stopping rule applied to empty trace"));
    }
    match rule.kind {
        StopKind::LowerBoundPlateau => {
            // Needs window + patience records so that the smoothed value
            // `patience` steps back is defined.
            if trace.len() < rule.window + rule.patience {
                return Ok(false);
            }
            let smoothed = trace.smoothed_series();
            let now = smoothed[smoothed.len() - 1];
            let past = smoothed[smoothed.len() - 1 - rule.patience];
            Ok(now - past <= rule.tolerance)
        }
        StopKind::ValidationPatience => {
            let mut best = f64::INFINITY;
            let mut since_best = 0usize;
            for r in &trace.records {
                let v = r.val_score.ok_or_else(|| {
                    PmfvbError::invalid(
                        "validation-patience rule requires validation scores in the trace",
                    )
                })?;
                if v < best {
                    best = v;
                    since_best = 0;
                } else {
                    since_best += 1;
                }
            }
            Ok(since_best >= rule.patience)
        }
    }
}
