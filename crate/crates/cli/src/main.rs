//! Benchmark front end for the subsampling Metropolis-Hastings kernels.
//!
//! Subcommands: `run` (one chain, trace + summary CSV), `scaling`
//! (evaluation-cost study over data sizes, CSV + SVG), `ess-vs-rho` (pCN
//! sweep, CSV + SVG), `mode` (expansion point only), `oracle` (quadrature
//! posterior moments for one- or two-dimensional targets).

mod config;
mod csvio;
mod svg;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::{DataSource, KernelChoice, ModelChoice, RunConfig};
use smh_core::model::FactorModel;
use smh_core::rng::{derived_rng, Stream};
use smh_core::{
    build_logistic_model, build_robust_regression_model, find_mode, generate_synthetic, load_csv,
    make_proposal, quadrature_posterior_moments, rho_study, run_chain, run_naive_fmh,
    scaling_study, summarize, GridSpec, KernelConfig, KernelKind, LipschitzBounds, ModeConfig,
    ModeResult, RhoStudyConfig, ScalingStudyConfig, TaylorSurrogate,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "smh",
    about = "Subsampling Metropolis-Hastings benchmark harness",
    version
)]
struct Cli {
    /// Key = value experiment config to load before applying flags.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; every random component derives its stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for CSV/SVG artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for study cells (0 = rayon default).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one chain; writes trace.csv and summary.csv.
    Run,
    /// Evaluation-cost scaling over the n grid; writes scaling.csv/svg.
    Scaling,
    /// ESS and acceptance across the pCN rho grid; writes rho.csv/svg.
    EssVsRho,
    /// Locate the expansion point; writes mode.csv.
    Mode,
    /// Quadrature posterior moments (d <= 2); writes oracle.csv.
    Oracle,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    cfg.validate()?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;

    match cli.command {
        Command::Run => cmd_run(&cfg),
        Command::Scaling => cmd_scaling(&cfg),
        Command::EssVsRho => cmd_ess_vs_rho(&cfg),
        Command::Mode => cmd_mode(&cfg),
        Command::Oracle => cmd_oracle(&cfg),
    }
}

enum BuiltModel {
    Logistic(smh_core::LogisticRegression),
    Robust(smh_core::RobustLinearRegression),
}

impl BuiltModel {
    fn as_dyn(&self) -> &dyn FactorModel {
        match self {
            BuiltModel::Logistic(m) => m,
            BuiltModel::Robust(m) => m,
        }
    }
}

fn build_model(cfg: &RunConfig) -> Result<BuiltModel> {
    let data = match &cfg.data {
        DataSource::Synthetic => {
            generate_synthetic(cfg.n, cfg.dim, cfg.model.kind(), cfg.seed)?
        }
        DataSource::Csv(path) => {
            load_csv(path).with_context(|| format!("loading {}", path.display()))?
        }
    };
    Ok(match cfg.model {
        ModelChoice::Logistic => BuiltModel::Logistic(build_logistic_model(data)?),
        ModelChoice::Robust { nu } => BuiltModel::Robust(build_robust_regression_model(data, nu)?),
    })
}

fn locate_mode(model: &dyn FactorModel, cfg: &RunConfig) -> Result<ModeResult> {
    let mut rng = derived_rng(cfg.seed, Stream::ModeFinder, 0);
    Ok(find_mode(model, &ModeConfig::default(), &mut rng)?)
}

fn cmd_run(cfg: &RunConfig) -> Result<()> {
    let built = build_model(cfg)?;
    let model = built.as_dyn();
    let m = model.factor_count();
    let mode = locate_mode(model, cfg)?;
    let surrogate =
        TaylorSurrogate::build(model, &mode.theta_hat, cfg.kernel.surrogate_order())?;
    let proposal = make_proposal(cfg.proposal_kind(), m, &surrogate)?;

    let kernel_config = KernelConfig {
        kind: match cfg.kernel {
            KernelChoice::Mh => KernelKind::Mh,
            KernelChoice::Smh1 | KernelChoice::Smh2 => KernelKind::Smh {
                order: cfg.kernel.surrogate_order(),
                truncation: cfg.truncation.resolve(m),
            },
            KernelChoice::FmhNaive => KernelKind::FmhNaive,
        },
        iterations: cfg.iterations,
        burn_in: cfg.burn_in(),
        thin: cfg.thin,
        seed: cfg.seed,
    };
    let trace = match cfg.kernel {
        KernelChoice::FmhNaive => {
            let bounds = LipschitzBounds::from_gradient_bounds(model)?;
            run_naive_fmh(model, &bounds, &proposal, &kernel_config, &mode.theta_hat)?
        }
        KernelChoice::Mh => run_chain(model, None, &proposal, &kernel_config, &mode.theta_hat)?,
        _ => run_chain(
            model,
            Some(&surrogate),
            &proposal,
            &kernel_config,
            &mode.theta_hat,
        )?,
    };
    let summary = summarize(&trace);

    let trace_path = cfg.out.join("trace.csv");
    let summary_path = cfg.out.join("summary.csv");
    csvio::write_trace(&trace_path, &trace)?;
    csvio::write_summary(&summary_path, &summary)?;
    println!(
        "{} on {} factors: accept_rate={:.4} mean_evals={:.1} ess[0]={:.1} wall={:.2}s",
        cfg.kernel.label(),
        m,
        summary.accept_rate,
        summary.mean_evaluations,
        summary.ess[0],
        summary.wall.as_secs_f64()
    );
    println!("wrote {}", trace_path.display());
    println!("wrote {}", summary_path.display());
    Ok(())
}

fn cmd_scaling(cfg: &RunConfig) -> Result<()> {
    if let DataSource::Csv(_) = cfg.data {
        bail!("the scaling study generates synthetic data per grid size; set data = synthetic");
    }
    let study = ScalingStudyConfig {
        model: cfg.model.kind(),
        dim: cfg.dim,
        n_grid: cfg.n_grid.clone(),
        kernels: cfg
            .kernels
            .iter()
            .map(|k| k.as_study(cfg.truncation))
            .collect(),
        proposal: cfg.proposal_kind(),
        sampling_iterations: cfg.iterations,
        burn_in: cfg.burn_in(),
        repetitions: cfg.repetitions,
        seed: cfg.seed,
    };
    let result = scaling_study(&study)?;

    let csv_path = cfg.out.join("scaling.csv");
    csvio::write_scaling(&csv_path, &result)?;
    let plot = svg::LinePlot {
        title: "Mean factor evaluations per iteration".to_string(),
        x_label: "data size n".to_string(),
        y_label: "mean evaluations".to_string(),
        log_x: true,
        log_y: true,
        series: result
            .series
            .iter()
            .map(|s| svg::Series {
                label: s.label.clone(),
                points: result
                    .n_grid
                    .iter()
                    .zip(&s.mean_evaluations)
                    .map(|(n, e)| (*n as f64, *e))
                    .collect(),
            })
            .collect(),
    };
    let svg_path = cfg.out.join("scaling.svg");
    std::fs::write(&svg_path, plot.render())?;

    for series in &result.series {
        println!(
            "{}: slope={:.4} (se {:.4}{}) evals={:?}",
            series.label,
            series.slope,
            series.slope_se,
            if series.dropped_smallest_n {
                ", smallest n dropped"
            } else {
                ""
            },
            series.mean_evaluations
        );
    }
    println!("wrote {}", csv_path.display());
    println!("wrote {}", svg_path.display());
    Ok(())
}

fn cmd_ess_vs_rho(cfg: &RunConfig) -> Result<()> {
    if let DataSource::Csv(_) = cfg.data {
        bail!("the rho study generates synthetic data per grid size; set data = synthetic");
    }
    let study = RhoStudyConfig {
        model: cfg.model.kind(),
        dim: cfg.dim,
        n_grid: cfg.n_grid.clone(),
        rho_grid: cfg.rho_grid.clone(),
        kernel: cfg.kernel.as_study(cfg.truncation),
        sampling_iterations: cfg.iterations,
        burn_in: cfg.burn_in(),
        repetitions: cfg.repetitions,
        seed: cfg.seed,
    };
    let result = rho_study(&study)?;

    let csv_path = cfg.out.join("rho.csv");
    csvio::write_rho(&csv_path, &result)?;
    let series = result
        .n_grid
        .iter()
        .map(|n| svg::Series {
            label: format!("n={n}"),
            points: result
                .cells
                .iter()
                .filter(|c| c.n == *n)
                .map(|c| (c.rho, c.ess_per_sec))
                .collect(),
        })
        .collect();
    let plot = svg::LinePlot {
        title: format!("ESS per second vs pCN rho ({})", cfg.kernel.label()),
        x_label: "rho".to_string(),
        y_label: "ESS/sec (first coordinate)".to_string(),
        log_x: false,
        log_y: true,
        series,
    };
    let svg_path = cfg.out.join("rho.svg");
    std::fs::write(&svg_path, plot.render())?;

    for cell in &result.cells {
        println!(
            "n={} rho={:.2}: ess/sec={:.1} accept={:.4}",
            cell.n, cell.rho, cell.ess_per_sec, cell.accept_rate
        );
    }
    println!("wrote {}", csv_path.display());
    println!("wrote {}", svg_path.display());
    Ok(())
}

fn cmd_mode(cfg: &RunConfig) -> Result<()> {
    let built = build_model(cfg)?;
    let mode = locate_mode(built.as_dyn(), cfg)?;
    let path = cfg.out.join("mode.csv");
    csvio::write_mode(&path, &mode.theta_hat, mode.grad_norm, mode.hessian_positive_definite)?;
    println!(
        "theta_hat = [{}]",
        mode.theta_hat
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!(
        "gradient norm {:.3e}, Hessian positive definite: {}",
        mode.grad_norm, mode.hessian_positive_definite
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_oracle(cfg: &RunConfig) -> Result<()> {
    let built = build_model(cfg)?;
    let model = built.as_dyn();
    if model.dim() > 2 {
        bail!(
            "quadrature ground truth needs d <= 2, got d = {}",
            model.dim()
        );
    }
    let mode = locate_mode(model, cfg)?;
    let scales = mode.posterior_scales()?;
    let spec = GridSpec::around_mode(&mode.theta_hat, &scales, cfg.oracle_points);
    let moments = quadrature_posterior_moments(model, &spec)?;
    let path = cfg.out.join("oracle.csv");
    csvio::write_oracle(&path, &moments)?;
    println!(
        "posterior mean = [{}]",
        moments
            .mean
            .iter()
            .map(|v| format!("{v:.8}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    for j in 0..moments.mean.len() {
        println!("variance[{j}] = {:.8}", moments.variance(j));
    }
    println!("wrote {}", path.display());
    Ok(())
}
