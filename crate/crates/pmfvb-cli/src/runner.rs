//! Experiment execution and output persistence. Every run directory is
//! self-describing: `run_meta.json` embeds the fully resolved config and
//! can be passed back to `run --config` to reproduce `trace.csv`
//! byte for byte (wall-clock time lives only in run_meta.json).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pmfvb::engine::{
    estimate_lower_bound, run_pmfvb, LmcConfig, ParticleCloud, RunTrace, StoppingRule,
};
use pmfvb::nn::{
    metrics as nn_metrics, predict, run_nn_baseline, run_pmfvb_nn, BaselineConfig, BaselineMethod,
    DriftHyper, MlpModel, NnPrior, NnTrainConfig, Task,
};
use pmfvb::rng::substream;
use pmfvb::samplers::{
    adam_sgld_step, mala_sample, psgld_step, sgld_step, AdamSgldState, CoordTransform, PsgldState,
    UnconstrainedTarget,
};
use pmfvb::sv::{generate_sv_data, run_pmfvb_sv, SvData, SvPriors, SvStateSummary};
use pmfvb::targets::{
    gaussian_toy_mean_field_optimum, generate_logistic_data, logistic_log_unnorm_posterior,
    sigmoid, GaussianToy, LogisticModel,
};
use rand_distr::StandardNormal;
use rand::Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentConfig, Method};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: exit code 2.
    Config(String),
    /// Runtime failure: exit code 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<pmfvb::PmfvbError> for CliError {
    fn from(e: pmfvb::PmfvbError) -> Self {
        match e {
            pmfvb::PmfvbError::InvalidArgument(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub metrics: Value,
}

fn sha_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_trace_csv(path: &Path, trace: &RunTrace) -> CliResult<()> {
    let mut s = String::from("iter,lower_bound,smoothed_lb,val_score\n");
    for r in &trace.records {
        let _ = write!(s, "{},{:?},", r.iter, r.lower_bound);
        match r.smoothed_lb {
            Some(v) => {
                let _ = write!(s, "{v:?}");
            }
            None => {}
        }
        s.push(',');
        match r.val_score {
            Some(v) => {
                let _ = writeln!(s, "{v:?}");
            }
            None => s.push('\n'),
        }
    }
    std::fs::write(path, s).map_err(io_err)
}

fn write_clouds_csv(path: &Path, clouds: &[&ParticleCloud]) -> CliResult<()> {
    let mut s = String::from("block,particle,coord,value\n");
    for c in clouds {
        for i in 0..c.num_particles() {
            for (j, v) in c.particle(i).iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{:?}", c.block_id, i, j, v);
            }
        }
    }
    std::fs::write(path, s).map_err(io_err)
}

fn write_samples_csv(path: &Path, samples: &[Vec<f64>], stride: usize) -> CliResult<()> {
    let dim = samples.first().map_or(0, |s| s.len());
    let mut s = String::from("draw");
    for j in 0..dim {
        let _ = write!(s, ",x{j}");
    }
    s.push('\n');
    for (i, row) in samples.iter().enumerate().step_by(stride.max(1)) {
        let _ = write!(s, "{i}");
        for v in row {
            let _ = write!(s, ",{v:?}");
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(io_err)
}

fn column_stats(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let dim = samples[0].len();
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for s in samples {
        for j in 0..dim {
            let d = s[j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

const PHASE_CHAIN: u64 = 0x22;

/// Shared driver for the unadjusted chains on a low-dimensional
/// unconstrained target; returns all post-burn-in constrained draws.
fn run_unadjusted_chain<F, G>(
    method: Method,
    target: &UnconstrainedTarget<F, G>,
    init_constrained: &[f64],
    h: f64,
    n_iters: usize,
    burn_in: usize,
    seed: u64,
) -> CliResult<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if burn_in >= n_iters {
        return Err(CliError::Config("burn_in must be below max_iters".into()));
    }
    let mut z = target.unconstrain(init_constrained).map_err(CliError::from)?;
    let mut rng = substream(seed, PHASE_CHAIN, 1, 0, 0);
    let mut psgld = PsgldState::new(z.clone());
    let mut adam = AdamSgldState::new(z.clone(), 100.0);
    let mut out = Vec::with_capacity(n_iters - burn_in);
    for t in 0..n_iters {
        match method {
            Method::Sgld => {
                let g = target.grad_z(&z);
                z = sgld_step(&z, &g, h, &mut rng)?;
            }
            Method::Psgld => {
                let g = target.grad_z(&psgld.theta);
                psgld_step(&mut psgld, &g, h, &mut rng)?;
                z.clone_from(&psgld.theta);
            }
            Method::AdamSgld => {
                let g = target.grad_z(&adam.theta);
                adam_sgld_step(&mut adam, &g, h, &mut rng)?;
                z.clone_from(&adam.theta);
            }
            _ => return Err(CliError::Config("not an unadjusted chain method".into())),
        }
        if t >= burn_in {
            out.push(target.constrain(&z));
        }
    }
    Ok(out)
}

struct RunArtifacts {
    trace: Option<RunTrace>,
    clouds: Vec<ParticleCloud>,
    samples: Vec<Vec<f64>>,
    metrics: Value,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<RunOutput> {
    cfg.validate().map_err(CliError::Config)?;
    std::fs::create_dir_all(&cfg.out).map_err(io_err)?;
    let started = Instant::now();

    let (artifacts, data_sha) = match cfg.experiment {
        Experiment::GaussianToy => (run_gaussian_toy(cfg)?, None),
        Experiment::Logistic => run_logistic(cfg)?,
        Experiment::Sv => run_sv(cfg)?,
        Experiment::NnRegression | Experiment::NnClassification => run_nn(cfg)?,
    };

    match &artifacts.trace {
        Some(trace) => write_trace_csv(&cfg.out.join("trace.csv"), trace)?,
        None => {
            std::fs::write(cfg.out.join("trace.csv"), "iter,lower_bound,smoothed_lb,val_score\n")
                .map_err(io_err)?
        }
    }
    if !artifacts.clouds.is_empty() {
        let refs: Vec<&ParticleCloud> = artifacts.clouds.iter().collect();
        write_clouds_csv(&cfg.out.join("particles.csv"), &refs)?;
    }
    if !artifacts.samples.is_empty() {
        let stride = artifacts.samples.len().div_ceil(10_000);
        write_samples_csv(&cfg.out.join("samples.csv"), &artifacts.samples, stride)?;
    }
    std::fs::write(
        cfg.out.join("metrics.json"),
        serde_json::to_string_pretty(&artifacts.metrics).unwrap(),
    )
    .map_err(io_err)?;

    let meta = json!({
        "config": cfg,
        "version": format!("pmfvb-cli {}", env!("CARGO_PKG_VERSION")),
        "data_sha": data_sha,
        "wall_ms": started.elapsed().as_millis() as u64,
    });
    std::fs::write(
        cfg.out.join("run_meta.json"),
        serde_json::to_string_pretty(&meta).unwrap(),
    )
    .map_err(io_err)?;

    Ok(RunOutput { out_dir: cfg.out.clone(), metrics: artifacts.metrics })
}

fn lmc_config(cfg: &ExperimentConfig) -> LmcConfig {
    LmcConfig {
        step_size: cfg.step_size,
        subsample: cfg.subsample,
        max_iters: cfg.max_iters,
        seed: cfg.seed,
        grad_clip: None,
    }
}

fn run_gaussian_toy(cfg: &ExperimentConfig) -> CliResult<RunArtifacts> {
    let toy = GaussianToy::new([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]])?;
    let optimum = gaussian_toy_mean_field_optimum(&toy);
    match cfg.method {
        Method::Pmfvb => {
            let rule = StoppingRule::lower_bound_plateau(50, 100, 0.0);
            let run = run_pmfvb(
                &toy,
                |_, rng| vec![rng.sample::<f64, _>(StandardNormal)],
                cfg.particles,
                &lmc_config(cfg),
                &rule,
            )?;
            let mut mean_err = 0.0f64;
            let mut var_err = 0.0f64;
            for (b, cloud) in run.clouds.iter().enumerate() {
                mean_err = mean_err.max((cloud.mean()[0] - optimum[b].0).abs());
                var_err = var_err.max((cloud.variance()[0] - optimum[b].1).abs());
            }
            let metrics = json!({
                "oracle_mean_abs_err": mean_err,
                "oracle_var_abs_err": var_err,
                "final_lower_bound": run.trace.records.last().map(|r| r.lower_bound),
            });
            Ok(RunArtifacts { trace: Some(run.trace), clouds: run.clouds, samples: vec![], metrics })
        }
        Method::Mala => {
            let prec = toy.precision();
            let target = UnconstrainedTarget::new(
                vec![CoordTransform::Identity; 2],
                move |x: &[f64]| {
                    -0.5 * (prec[0][0] * x[0] * x[0]
                        + 2.0 * prec[0][1] * x[0] * x[1]
                        + prec[1][1] * x[1] * x[1])
                },
                move |x: &[f64]| {
                    vec![
                        -(prec[0][0] * x[0] + prec[0][1] * x[1]),
                        -(prec[1][0] * x[0] + prec[1][1] * x[1]),
                    ]
                },
            );
            let n = cfg.n_samples.unwrap_or(100_000);
            let burn = cfg.burn_in.unwrap_or(n / 10);
            let res = mala_sample(&target, &[0.0, 0.0], cfg.step_size, n, burn, cfg.seed)?;
            let (mean, var) = column_stats(&res.samples);
            let metrics = json!({
                "posterior_mean": mean,
                "posterior_var": var,
                "acceptance_rate": res.acceptance_rate,
                "low_acceptance": res.low_acceptance,
            });
            Ok(RunArtifacts { trace: None, clouds: vec![], samples: res.samples, metrics })
        }
        _ => Err(CliError::Config(
            "gaussian-toy supports methods pmfvb and mala".into(),
        )),
    }
}

pub fn logistic_full_grad(beta: &[f64], model: &LogisticModel) -> Vec<f64> {
    let mut g = vec![0.0; model.d];
    for i in 0..model.n {
        let row = model.row(i);
        let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
        let r = model.y[i] as f64 - sigmoid(eta);
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
    for (gj, b) in g.iter_mut().zip(beta) {
        *gj -= b / model.prior_var;
    }
    g
}

fn run_logistic(cfg: &ExperimentConfig) -> CliResult<(RunArtifacts, Option<String>)> {
    let lc = cfg.logistic.clone().unwrap_or_default();
    let model = match &lc.data_csv {
        Some(path) => LogisticModel::load_csv(path, lc.prior_var)?,
        None => generate_logistic_data(lc.n, lc.d, lc.prior_var, lc.data_seed)?.0,
    };
    let data_path = cfg.out.join("data.csv");
    model.save_csv(&data_path)?;
    let sha = sha_hex(&std::fs::read(&data_path).map_err(io_err)?);

    let artifacts = match cfg.method {
        Method::Pmfvb => {
            let rule = StoppingRule::lower_bound_plateau(50, 100, 0.0);
            let pv = model.prior_var;
            let run = {
                let dims = [model.block1.len(), model.block2.len()];
                run_pmfvb(
                    &model,
                    move |b, rng| {
                        (0..dims[b])
                            .map(|_| pv.sqrt() * rng.sample::<f64, _>(StandardNormal))
                            .collect()
                    },
                    cfg.particles,
                    &lmc_config(cfg),
                    &rule,
                )?
            };
            // Map per-block summaries back onto coefficient order.
            let mut means = vec![0.0; model.d];
            let mut sds = vec![0.0; model.d];
            for (block, cloud) in [&model.block1, &model.block2].iter().zip(&run.clouds) {
                let m = cloud.mean();
                let v = cloud.variance();
                for (k, &j) in block.iter().enumerate() {
                    means[j] = m[k];
                    sds[j] = v[k].sqrt();
                }
            }
            let metrics = json!({
                "posterior_mean": means,
                "posterior_sd": sds,
                "final_lower_bound": run.trace.records.last().map(|r| r.lower_bound),
            });
            RunArtifacts { trace: Some(run.trace), clouds: run.clouds, samples: vec![], metrics }
        }
        Method::Mala | Method::Sgld | Method::Psgld | Method::AdamSgld => {
            let m = &model;
            let target = UnconstrainedTarget::new(
                vec![CoordTransform::Identity; m.d],
                move |b: &[f64]| logistic_log_unnorm_posterior(b, m),
                move |b: &[f64]| logistic_full_grad(b, m),
            );
            let init = vec![0.0; model.d];
            let n = cfg.n_samples.unwrap_or(cfg.max_iters.max(50_000));
            let burn = cfg.burn_in.unwrap_or(n / 10);
            let (samples, extra) = if cfg.method == Method::Mala {
                let res = mala_sample(&target, &init, cfg.step_size, n, burn, cfg.seed)?;
                let extra = json!({
                    "acceptance_rate": res.acceptance_rate,
                    "low_acceptance": res.low_acceptance,
                });
                (res.samples, extra)
            } else {
                let s =
                    run_unadjusted_chain(cfg.method, &target, &init, cfg.step_size, n, burn, cfg.seed)?;
                (s, json!({}))
            };
            let (mean, var) = column_stats(&samples);
            let mut metrics = json!({
                "posterior_mean": mean,
                "posterior_sd": var.iter().map(|v| v.sqrt()).collect::<Vec<_>>(),
            });
            if let (Value::Object(base), Value::Object(ex)) = (&mut metrics, extra) {
                base.extend(ex);
            }
            RunArtifacts { trace: None, clouds: vec![], samples, metrics }
        }
    };
    Ok((artifacts, Some(sha)))
}

/// Joint SV posterior over (mu, phi, sigma2, x_1..x_T) for the oracle
/// chains, in tanh/log-transformed coordinates.
pub fn sv_unconstrained<'a>(
    data: &'a SvData,
    priors: &SvPriors,
) -> UnconstrainedTarget<impl Fn(&[f64]) -> f64 + Sync + 'a, impl Fn(&[f64]) -> Vec<f64> + Sync + 'a>
{
    let mut transforms = vec![
        CoordTransform::Identity,
        CoordTransform::Tanh,
        CoordTransform::Log,
    ];
    transforms.extend(vec![CoordTransform::Identity; data.len()]);
    let p = *priors;
    UnconstrainedTarget::new(
        transforms,
        move |t: &[f64]| pmfvb::sv::sv_log_joint(t[0], t[1], t[2], &t[3..], data, &p),
        move |t: &[f64]| pmfvb::sv::sv_log_joint_grad(t[0], t[1], t[2], &t[3..], data, &p),
    )
}

fn run_sv(cfg: &ExperimentConfig) -> CliResult<(RunArtifacts, Option<String>)> {
    let sc = cfg.sv.clone().unwrap_or_default();
    let data = match &sc.data_csv {
        Some(path) => SvData::load_csv(path)?,
        None => generate_sv_data(sc.t_len, sc.mu, sc.phi, sc.sigma, sc.data_seed)?,
    };
    let data_path = cfg.out.join("data.csv");
    data.save_csv(&data_path)?;
    let sha = sha_hex(&std::fs::read(&data_path).map_err(io_err)?);
    let priors = SvPriors::default();

    let artifacts = match cfg.method {
        Method::Pmfvb => {
            let rule = StoppingRule::lower_bound_plateau(50, 100, 0.0);
            let (state, trace) = run_pmfvb_sv(
                &data,
                &priors,
                cfg.particles,
                &lmc_config(cfg),
                &rule,
                sc.b_variant,
            )?;
            let summary = SvStateSummary::from_state(&state);
            let metrics = serde_json::to_value(&summary).unwrap();
            RunArtifacts { trace: Some(trace), clouds: vec![state.cloud], samples: vec![], metrics }
        }
        Method::Mala | Method::Sgld | Method::Psgld | Method::AdamSgld => {
            let target = sv_unconstrained(&data, &priors);
            let mut init = vec![0.0, 0.9, 0.25];
            init.extend(vec![0.0; data.len()]);
            let n = cfg.n_samples.unwrap_or(cfg.max_iters.max(50_000));
            let burn = cfg.burn_in.unwrap_or(n / 5);
            let (samples, extra) = if cfg.method == Method::Mala {
                let res = mala_sample(&target, &init, cfg.step_size, n, burn, cfg.seed)?;
                let extra = json!({
                    "acceptance_rate": res.acceptance_rate,
                    "low_acceptance": res.low_acceptance,
                });
                (res.samples, extra)
            } else {
                let s =
                    run_unadjusted_chain(cfg.method, &target, &init, cfg.step_size, n, burn, cfg.seed)?;
                (s, json!({}))
            };
            let (mean, var) = column_stats(&samples);
            let mut metrics = json!({
                "mu_mean": mean[0], "mu_var": var[0],
                "phi_mean": mean[1], "phi_var": var[1],
                "sigma2_mean": mean[2], "sigma2_var": var[2],
            });
            if let (Value::Object(base), Value::Object(ex)) = (&mut metrics, extra) {
                base.extend(ex);
            }
            // Keep only the three parameters in samples.csv; the latent
            // path would dwarf the file.
            let slim: Vec<Vec<f64>> = samples.iter().map(|s| s[..3].to_vec()).collect();
            RunArtifacts { trace: None, clouds: vec![], samples: slim, metrics }
        }
    };
    Ok((artifacts, Some(sha)))
}

fn run_nn(cfg: &ExperimentConfig) -> CliResult<(RunArtifacts, Option<String>)> {
    let nc = cfg.nn.clone().unwrap_or_default();
    let task = match cfg.experiment {
        Experiment::NnClassification => Task::Classification,
        _ => Task::Regression,
    };
    let (train, val, test) = match task {
        Task::Regression => crate::data::generate_nonlinear_regression(
            nc.n_train, nc.n_val, nc.n_test, nc.data_seed,
        )?,
        Task::Classification => crate::data::generate_nonlinear_classification(
            nc.n_train, nc.n_val, nc.n_test, nc.data_seed,
        )?,
    };
    let csv = crate::data::dataset_to_csv(&train);
    std::fs::write(cfg.out.join("data.csv"), &csv).map_err(io_err)?;
    let sha = sha_hex(csv.as_bytes());

    let model = MlpModel::new(nc.layers.clone())?;
    if model.input_dim() != train.p {
        return Err(CliError::Config(format!(
            "layers: input width {} does not match {} covariates",
            model.input_dim(),
            train.p
        )));
    }

    let artifacts = match cfg.method {
        Method::Pmfvb => {
            let hyper = DriftHyper {
                step_size: cfg.step_size,
                a: nc.drift_a,
                block_frac: nc.block_frac,
                ..DriftHyper::default()
            };
            let train_cfg = NnTrainConfig {
                num_particles: cfg.particles,
                batch_size: nc.batch_size,
                max_iters: cfg.max_iters,
                seed: cfg.seed,
                hyper,
                prior: NnPrior::default(),
                init_sd: nc.init_sd,
            };
            let rule = StoppingRule::validation_patience(nc.patience);
            let fit = run_pmfvb_nn(task, &model, &train, &val, &train_cfg, &rule)?;
            let preds: Vec<f64> = (0..test.n)
                .map(|i| predict(&fit.cloud, &model, test.row(i), task))
                .collect::<Result<_, _>>()?;
            let m = nn_metrics(task, &preds, &test.y, fit.noise_var)?;
            let metrics = json!({
                "test": m,
                "iterations": fit.trace.records.len(),
                "stopped_early": !fit.trace.truncated,
            });
            RunArtifacts {
                trace: Some(fit.trace),
                clouds: vec![fit.cloud],
                samples: vec![],
                metrics,
            }
        }
        Method::Sgld | Method::Psgld | Method::AdamSgld => {
            let method = match cfg.method {
                Method::Sgld => BaselineMethod::Sgld,
                Method::Psgld => BaselineMethod::Psgld,
                _ => BaselineMethod::AdamSgld,
            };
            let bcfg = BaselineConfig {
                step_size: cfg.step_size,
                n_iters: cfg.max_iters,
                burn_in: if nc.burn_in > 0 { nc.burn_in } else { cfg.max_iters / 2 },
                batch_size: nc.batch_size,
                seed: cfg.seed,
                a: if method == BaselineMethod::AdamSgld { nc.drift_a } else { 0.0 },
                init_sd: nc.init_sd,
            };
            let fit = run_nn_baseline(method, task, &model, &train, &bcfg)?;
            let preds: Vec<f64> = (0..test.n)
                .map(|i| fit.predict(&model, test.row(i), task))
                .collect::<Result<_, _>>()?;
            let m = nn_metrics(task, &preds, &test.y, fit.noise_var)?;
            let metrics = json!({ "test": m });
            RunArtifacts {
                trace: None,
                clouds: vec![],
                samples: vec![fit.w_mean],
                metrics,
            }
        }
        Method::Mala => Err(CliError::Config(
            "mala is not supported for the neural-network experiments".to_string(),
        ))?,
    };
    Ok((artifacts, Some(sha)))
}

/// Lower-bound helper reused by the acceptance checks: the Eq.-19 style
/// particle estimate over the final clouds.
pub fn final_lower_bound<T: pmfvb::engine::FactorizedTarget>(
    target: &T,
    clouds: &[ParticleCloud],
) -> pmfvb::Result<f64> {
    let refs: Vec<&ParticleCloud> = clouds.iter().collect();
    estimate_lower_bound(&refs, |theta| target.log_unnorm_joint(theta))
}
