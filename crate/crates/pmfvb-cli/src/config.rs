//! Experiment configuration: one JSON document, with flat CLI flags
//! overriding file values and built-in defaults filling the rest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    GaussianToy,
    Logistic,
    Sv,
    NnRegression,
    NnClassification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pmfvb,
    Sgld,
    Psgld,
    AdamSgld,
    Mala,
}

fn default_particles() -> usize {
    500
}
fn default_step_size() -> f64 {
    0.05
}
fn default_subsample() -> usize {
    10
}
fn default_max_iters() -> usize {
    500
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticCfg {
    pub n: usize,
    pub d: usize,
    pub prior_var: f64,
    /// Generator seed for the synthetic dataset (shared across methods).
    pub data_seed: u64,
    /// Optional CSV path; overrides the synthetic recipe.
    #[serde(default)]
    pub data_csv: Option<PathBuf>,
}

impl Default for LogisticCfg {
    fn default() -> Self {
        LogisticCfg { n: 200, d: 4, prior_var: 4.0, data_seed: 1, data_csv: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvCfg {
    pub t_len: usize,
    pub mu: f64,
    pub phi: f64,
    pub sigma: f64,
    pub data_seed: u64,
    #[serde(default)]
    pub data_csv: Option<PathBuf>,
    /// Gaussian-factor numerator variant; "corrected" is the default.
    #[serde(default)]
    pub b_variant: pmfvb::sv::BVariant,
}

impl Default for SvCfg {
    fn default() -> Self {
        SvCfg {
            t_len: 500,
            mu: 1.0,
            phi: 0.8,
            sigma: 0.5,
            data_seed: 1,
            data_csv: None,
            b_variant: pmfvb::sv::BVariant::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NnCfg {
    pub layers: Vec<usize>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub data_seed: u64,
    pub batch_size: Option<usize>,
    pub drift_a: f64,
    pub block_frac: f64,
    pub patience: usize,
    pub init_sd: f64,
    /// Baseline chain settings.
    pub burn_in: usize,
}

impl Default for NnCfg {
    fn default() -> Self {
        NnCfg {
            layers: vec![20, 10, 1],
            n_train: 5000,
            n_val: 1000,
            n_test: 1000,
            data_seed: 1,
            batch_size: Some(100),
            drift_a: 100.0,
            block_frac: 0.10,
            patience: 100,
            init_sd: 0.1,
            burn_in: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    #[serde(default = "default_subsample")]
    pub subsample: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// MALA chain length and burn-in.
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default)]
    pub logistic: Option<LogisticCfg>,
    #[serde(default)]
    pub sv: Option<SvCfg>,
    #[serde(default)]
    pub nn: Option<NnCfg>,
}

impl ExperimentConfig {
    /// Default config for an experiment/method pair; per-experiment
    /// sub-configs stay `None` (their own defaults apply downstream).
    pub fn new(experiment: Experiment, method: Method) -> Self {
        let value = serde_json::json!({ "experiment": experiment, "method": method });
        serde_json::from_value(value).expect("defaults are valid")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.particles == 0 {
            return Err("particles: must be at least 1".into());
        }
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err("step_size: must be finite and >= 0".into());
        }
        if self.subsample == 0 || self.subsample > self.particles {
            return Err(format!(
                "subsample: m={} must satisfy 1 <= m <= particles={}",
                self.subsample, self.particles
            ));
        }
        if self.max_iters == 0 {
            return Err("max_iters: must be at least 1".into());
        }
        Ok(())
    }
}

/// Flat flag overrides applied on top of the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.particles {
            cfg.particles = v;
        }
        if let Some(v) = self.step_size {
            cfg.step_size = v;
        }
        if let Some(v) = self.subsample {
            cfg.subsample = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
    }
}

/// Load a config file; accepts either a plain config document or a
/// run_meta.json (whose `config` field is then used), so any finished
/// run directory is rerunnable as-is.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let doc = match value.get("config") {
        Some(inner) => inner.clone(),
        None => value,
    };
    serde_json::from_value(doc).map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_fields() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment":"gaussian-toy","method":"pmfvb"}"#).unwrap();
        assert_eq!(cfg.particles, 500);
        assert_eq!(cfg.subsample, 10);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment":"logistic","method":"pmfvb"}"#).unwrap();
        cfg.subsample = cfg.particles + 1;
        let err = cfg.validate().unwrap_err();
        assert!(err.contains("subsample"), "{err}");
    }

    #[test]
    fn overrides_beat_file_values() {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(r#"{"experiment":"sv","method":"pmfvb","seed":3,"step_size":0.4}"#)
                .unwrap();
        let ov = Overrides { seed: Some(9), step_size: Some(0.1), ..Overrides::default() };
        ov.apply(&mut cfg);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.step_size, 0.1);
    }
}
