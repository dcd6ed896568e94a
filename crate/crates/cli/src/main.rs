mod commands;
mod config;
mod error;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use moce_core::oracle_bench::reference::TableId;
use moce_core::oracle_bench::GaussianExpCase;
use moce_core::sa_engine::StepSchedule;

use config::{BenchmarkConfig, FitConfig, OracleConfig, ShockConfig, SolveConfig, TableConfig};
use error::CliError;
use report::{Format, Report};

/// Multivariate OCE risk allocation: stochastic approximation solver,
/// closed-form and Monte Carlo benchmarks, MNIG fitting and shock
/// sensitivities.
#[derive(Parser)]
#[command(name = "moce", version)]
struct Cli {
    /// RNG seed; overrides the seed in the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json", global = true)]
    format: Format,
    /// Worker threads for parallel sections (all cores by default).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Projected Robbins-Monro solve with averaging, risk estimate and CIs.
    Solve {
        #[arg(long, short)]
        config: PathBuf,
        /// Overrides `schedule.n_iter`.
        #[arg(long)]
        n_iter: Option<usize>,
    },
    /// Closed-form allocation for the bivariate Gaussian exponential case.
    Oracle {
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        sigma: Option<Vec<f64>>,
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mean: Option<Vec<f64>>,
    },
    /// Sample-average minimization with Nelder-Mead.
    Benchmark {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// Marginal risk and allocation under a shock `Y`.
    Shock {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// EM fit of an MNIG law to a CSV of observations.
    FitMnig {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Recompute a published table and compare against it.
    ReproduceTable {
        table: TableId,
        #[arg(long)]
        n_iter: Option<usize>,
        #[arg(long, default_value_t = 500_000)]
        mc_samples: usize,
    },
}

fn pair(flag: &str, v: Vec<f64>) -> Result<[f64; 2], CliError> {
    match v[..] {
        [a, b] => Ok([a, b]),
        _ => Err(CliError::Config(format!(
            "--{flag} takes two comma-separated values"
        ))),
    }
}

fn oracle_config(
    path: Option<&Path>,
    lambda: Option<Vec<f64>>,
    alpha: Option<f64>,
    sigma: Option<Vec<f64>>,
    rho: Option<f64>,
    mean: Option<Vec<f64>>,
) -> Result<OracleConfig, CliError> {
    let mut cfg = match path {
        Some(p) => config::load::<OracleConfig>(p)?,
        None => {
            let (Some(l), Some(a), Some(r)) = (lambda.clone(), alpha, rho) else {
                return Err(CliError::Config(
                    "oracle needs --config or all of --lambda, --alpha, --rho".into(),
                ));
            };
            OracleConfig {
                seed: None,
                case: GaussianExpCase {
                    lambda: pair("lambda", l)?,
                    alpha: a,
                    sigma: [1.0, 1.0],
                    rho: r,
                    mean: [0.0, 0.0],
                },
            }
        }
    };
    let c = &mut cfg.case;
    if let Some(v) = lambda {
        c.lambda = pair("lambda", v)?;
    }
    if let Some(v) = alpha {
        c.alpha = v;
    }
    if let Some(v) = sigma {
        c.sigma = pair("sigma", v)?;
    }
    if let Some(v) = rho {
        c.rho = v;
    }
    if let Some(v) = mean {
        c.mean = pair("mean", v)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Report, CliError> {
    let seed = |file: Option<u64>| cli.seed.or(file).unwrap_or(0);
    match cli.command {
        Command::Solve { config, n_iter } => {
            let mut cfg: SolveConfig = config::load(&config)?;
            if let Some(n) = n_iter {
                cfg.schedule.n_iter = n;
            }
            let s = seed(cfg.seed);
            commands::solve(cfg, s)
        }
        Command::Oracle {
            config,
            lambda,
            alpha,
            sigma,
            rho,
            mean,
        } => {
            let cfg = oracle_config(config.as_deref(), lambda, alpha, sigma, rho, mean)?;
            let s = seed(cfg.seed);
            commands::oracle(cfg, s)
        }
        Command::Benchmark { config, n_samples } => {
            let mut cfg: BenchmarkConfig = config::load(&config)?;
            if let Some(n) = n_samples {
                cfg.n_samples = n;
            }
            let s = seed(cfg.seed);
            commands::benchmark(cfg, s)
        }
        Command::Shock { config, n_samples } => {
            let mut cfg: ShockConfig = config::load(&config)?;
            if let Some(n) = n_samples {
                cfg.n_samples = n;
            }
            let s = seed(cfg.seed);
            commands::shock(cfg, s)
        }
        Command::FitMnig { config } => {
            let cfg: FitConfig = config::load(&config)?;
            let s = seed(cfg.seed);
            let mut report = commands::fit_mnig(cfg, s)?;
            if cli.format == Format::Csv {
                commands::drop_trace(&mut report);
            }
            Ok(report)
        }
        Command::ReproduceTable {
            table,
            n_iter,
            mc_samples,
        } => {
            let mut schedule = StepSchedule::default();
            if let Some(n) = n_iter {
                schedule.n_iter = n;
            }
            commands::reproduce_table(TableConfig {
                table,
                seed: seed(None),
                schedule,
                mc_samples,
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let start = Instant::now();
    let format = cli.format;
    let output = cli.output.clone();
    let result = (|| {
        if let Some(n) = cli.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(format!("threads: {e}")))?;
        }
        let report = run(cli)?;
        let bytes = report::render(&report, format, start.elapsed().as_secs_f64())?;
        report::emit(&bytes, output.as_deref())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("failed after {:.3}s", start.elapsed().as_secs_f64());
            eprintln!(
                "{}",
                json!({ "error": { "category": e.category(), "message": e.to_string() } })
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
