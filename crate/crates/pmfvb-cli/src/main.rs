use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pmfvb_cli::config::{load_config, Experiment, ExperimentConfig, Method, Overrides};
use pmfvb_cli::runner::{run_experiment, CliError, CliResult};
use pmfvb_cli::sweep::{load_sweep, run_sweep};

#[derive(Parser)]
#[command(name = "pmfvb", version, about = "Particle mean-field variational Bayes experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts to the output directory.
    Run {
        /// JSON config file (a previous run_meta.json also works).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a grid of configs across seeds and summarize the metrics.
    Sweep {
        /// JSON sweep spec: {"template": .., "grid": .., "seeds": ..}.
        #[arg(long)]
        config: PathBuf,
        /// Directory for per-cell runs and summary.csv.
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
    },
    /// Generate a dataset for an experiment and write it as CSV.
    GenData {
        #[arg(long, value_enum)]
        experiment: Experiment,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Run the long-run MCMC reference (MALA) for an experiment.
    Oracle {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
        /// Number of posterior draws to keep.
        #[arg(long)]
        n_samples: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn resolve_config(
    config: Option<&PathBuf>,
    experiment: Option<Experiment>,
    method: Option<Method>,
    overrides: &Overrides,
) -> CliResult<ExperimentConfig> {
    let mut cfg = match config {
        Some(path) => load_config(path).map_err(CliError::Config)?,
        None => {
            let experiment = experiment.ok_or_else(|| {
                CliError::Config("either --config or --experiment is required".into())
            })?;
            ExperimentConfig::new(experiment, method.unwrap_or(Method::Pmfvb))
        }
    };
    if let Some(e) = experiment {
        cfg.experiment = e;
    }
    if let Some(m) = method {
        cfg.method = m;
    }
    overrides.apply(&mut cfg);
    Ok(cfg)
}

fn gen_data(experiment: Experiment, seed: u64, out: &PathBuf) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(e.to_string()))?;
    match experiment {
        Experiment::GaussianToy => {
            return Err(CliError::Config("gaussian-toy has no dataset".into()))
        }
        Experiment::Logistic => {
            let lc = pmfvb_cli::config::LogisticCfg::default();
            let (model, beta) =
                pmfvb::targets::generate_logistic_data(lc.n, lc.d, lc.prior_var, seed)?;
            model.save_csv(&out.join("logistic.csv"))?;
            println!("wrote {} (true beta: {beta:?})", out.join("logistic.csv").display());
        }
        Experiment::Sv => {
            let sc = pmfvb_cli::config::SvCfg::default();
            let data = pmfvb::sv::generate_sv_data(sc.t_len, sc.mu, sc.phi, sc.sigma, seed)?;
            data.save_csv(&out.join("sv.csv"))?;
            println!("wrote {}", out.join("sv.csv").display());
        }
        Experiment::NnRegression | Experiment::NnClassification => {
            let nc = pmfvb_cli::config::NnCfg::default();
            let (train, val, test) = if experiment == Experiment::NnRegression {
                pmfvb_cli::data::generate_nonlinear_regression(
                    nc.n_train, nc.n_val, nc.n_test, seed,
                )?
            } else {
                pmfvb_cli::data::generate_nonlinear_classification(
                    nc.n_train, nc.n_val, nc.n_test, seed,
                )?
            };
            for (name, d) in [("train", &train), ("val", &val), ("test", &test)] {
                let path = out.join(format!("{name}.csv"));
                std::fs::write(&path, pmfvb_cli::data::dataset_to_csv(d))
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config, experiment, method, overrides } => {
            let cfg = resolve_config(config.as_ref(), experiment, method, &overrides)?;
            let out = run_experiment(&cfg)?;
            println!(
                "run complete: {}\n{}",
                out.out_dir.display(),
                serde_json::to_string_pretty(&out.metrics).unwrap()
            );
            Ok(())
        }
        Command::Sweep { config, out } => {
            let spec = load_sweep(&config)?;
            let summary = run_sweep(&spec, &out)?;
            println!("sweep complete: {}", summary.display());
            Ok(())
        }
        Command::GenData { experiment, seed, out } => gen_data(experiment, seed, &out),
        Command::Oracle { config, experiment, n_samples, overrides } => {
            let mut cfg = resolve_config(config.as_ref(), experiment, None, &overrides)?;
            cfg.method = Method::Mala;
            if n_samples.is_some() {
                cfg.n_samples = n_samples;
            }
            let out = run_experiment(&cfg)?;
            println!(
                "oracle complete: {}\n{}",
                out.out_dir.display(),
                serde_json::to_string_pretty(&out.metrics).unwrap()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
