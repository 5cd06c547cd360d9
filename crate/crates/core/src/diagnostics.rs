//! Chain diagnostics and experiment drivers: effective sample size,
//! batch-means standard errors, low-dimensional quadrature ground truth, and
//! the scaling / pCN studies used by the benchmark CLI.

use crate::accept::LipschitzBounds;
use crate::error::{Error, Result};
use crate::kernel::{run_chain, run_naive_fmh, ChainTrace, KernelConfig, KernelKind};
use crate::mode::{find_mode, ModeConfig};
use crate::model::{
    build_logistic_model, build_robust_regression_model, generate_synthetic, FactorModel,
    ModelKind,
};
use crate::proposal::{make_proposal, ProposalKind};
use crate::rng::{derived_rng, Stream};
use crate::surrogate::{SurrogateOrder, TaylorSurrogate};
use rayon::prelude::*;
use std::time::Duration;

/// Effective sample size via the initial-positive-sequence truncation of the
/// empirical autocovariances: pair consecutive lags, sum pairs while they
/// stay positive, and discount the chain length by the resulting integrated
/// autocorrelation.
///
/// A zero-variance trace reports 0 (nothing was sampled); an antithetic
/// trace whose pairwise sums telescope to zero reports `+inf` (the estimator
/// sees super-efficient averaging). Both sentinels sit deliberately outside
/// the usual `0 < ess <= len` range.
pub fn ess(xs: &[f64]) -> f64 {
    let len = xs.len();
    if len < 4 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / len as f64;
    let centered: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..len - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / len as f64
    };
    let gamma0 = autocov(0);
    if gamma0 <= 0.0 {
        return 0.0; // constant trace
    }
    let mut pair_sum = 0.0;
    let mut t = 0usize;
    while 2 * t + 1 < len {
        let pair = autocov(2 * t) + autocov(2 * t + 1);
        if pair <= 0.0 {
            break;
        }
        pair_sum += pair;
        t += 1;
    }
    let asymptotic_variance = 2.0 * pair_sum - gamma0;
    if asymptotic_variance <= 0.0 {
        return f64::INFINITY;
    }
    len as f64 * gamma0 / asymptotic_variance
}

/// Batch-means estimate of the mean of a correlated trace and its standard
/// error, using ~sqrt(len) batches.
pub fn batch_means(xs: &[f64]) -> (f64, f64) {
    let len = xs.len();
    assert!(len >= 4, "batch means needs a few observations");
    let batch_count = (len as f64).sqrt().floor() as usize;
    let batch_size = len / batch_count;
    let used = batch_count * batch_size;
    let mut means = Vec::with_capacity(batch_count);
    for b in 0..batch_count {
        let chunk = &xs[b * batch_size..(b + 1) * batch_size];
        means.push(chunk.iter().sum::<f64>() / batch_size as f64);
    }
    let grand = xs[..used].iter().sum::<f64>() / used as f64;
    let var_of_means = means
        .iter()
        .map(|m| (m - grand) * (m - grand))
        .sum::<f64>()
        / (batch_count - 1) as f64;
    (grand, (var_of_means / batch_count as f64).sqrt())
}

/// Per-chain summary statistics.
#[derive(Debug, Clone)]
pub struct ChainSummary {
    pub ess: Vec<f64>,
    pub ess_per_sec: Vec<f64>,
    pub accept_rate: f64,
    pub mean_evaluations: f64,
    pub median_evaluations: f64,
    pub wall: Duration,
}

pub fn summarize(trace: &ChainTrace) -> ChainSummary {
    let secs = trace.wall_time().as_secs_f64().max(1e-12);
    let ess: Vec<f64> = (0..trace.dim()).map(|j| crate::diagnostics::ess(&trace.coordinate(j))).collect();
    let ess_per_sec = ess.iter().map(|e| e / secs).collect();
    ChainSummary {
        ess,
        ess_per_sec,
        accept_rate: trace.mean_acceptance(),
        mean_evaluations: trace.mean_evaluations(),
        median_evaluations: trace.median_evaluations(),
        wall: trace.wall_time(),
    }
}

/// Axis-aligned box for the quadrature oracle.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    /// Nodes per axis.
    pub points: usize,
}

impl GridSpec {
    /// Box of ten posterior standard deviations around a mode estimate.
    pub fn around_mode(center: &[f64], posterior_scale: &[f64], points: usize) -> Self {
        Self {
            center: center.to_vec(),
            half_width: posterior_scale.iter().map(|s| 10.0 * s).collect(),
            points,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub mean: Vec<f64>,
    /// Row-major d x d covariance.
    pub covariance: Vec<f64>,
}

impl PosteriorMoments {
    pub fn variance(&self, j: usize) -> f64 {
        let d = self.mean.len();
        self.covariance[j * d + j]
    }
}

/// Trapezoid-rule normalization, mean, and covariance of `exp(-U)` over the
/// box, for targets of dimension one or two. Errors when more than `1e-8` of
/// the mass sits on the box boundary (the grid is too small to trust).
pub fn quadrature_posterior_moments(
    model: &dyn FactorModel,
    spec: &GridSpec,
) -> Result<PosteriorMoments> {
    let d = model.dim();
    if d > 2 {
        return Err(Error::InvalidInput(
            "quadrature ground truth is limited to one or two dimensions".into(),
        ));
    }
    if spec.center.len() != d || spec.half_width.len() != d {
        return Err(Error::InvalidInput("grid spec dimension mismatch".into()));
    }
    if spec.points < 3 {
        return Err(Error::InvalidInput("need at least 3 nodes per axis".into()));
    }
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let lo = spec.center[j] - spec.half_width[j];
            let hi = spec.center[j] + spec.half_width[j];
            let step = (hi - lo) / (spec.points - 1) as f64;
            (0..spec.points).map(|i| lo + step * i as f64).collect()
        })
        .collect();
    let axis_weight = |j: usize, i: usize| -> f64 {
        let step = (axes[j][1] - axes[j][0]).abs();
        if i == 0 || i + 1 == spec.points {
            0.5 * step
        } else {
            step
        }
    };

    // Enumerate nodes; log densities first so the exponentials can be
    // stabilized against the maximum.
    let node_count = spec.points.pow(d as u32);
    let mut log_density = Vec::with_capacity(node_count);
    let mut max_log = f64::NEG_INFINITY;
    let mut theta = vec![0.0; d];
    for flat in 0..node_count {
        let mut rem = flat;
        for j in 0..d {
            theta[j] = axes[j][rem % spec.points];
            rem /= spec.points;
        }
        let ld = -model.total_potential(&theta);
        max_log = max_log.max(ld);
        log_density.push(ld);
    }

    let mut total = 0.0;
    let mut boundary = 0.0;
    let mut mean = vec![0.0; d];
    for (flat, ld) in log_density.iter().enumerate() {
        let mut rem = flat;
        let mut weight = 1.0;
        let mut on_boundary = false;
        for j in 0..d {
            let idx = rem % spec.points;
            rem /= spec.points;
            theta[j] = axes[j][idx];
            weight *= axis_weight(j, idx);
            on_boundary |= idx == 0 || idx + 1 == spec.points;
        }
        let mass = weight * (ld - max_log).exp();
        total += mass;
        if on_boundary {
            boundary += mass;
        }
        for j in 0..d {
            mean[j] += mass * theta[j];
        }
    }
    if !(total > 0.0) {
        return Err(Error::Numeric("quadrature mass vanished".into()));
    }
    if boundary / total > 1e-8 {
        return Err(Error::Numeric(format!(
            "{:.2e} of the posterior mass sits on the box boundary; enlarge the grid",
            boundary / total
        )));
    }
    mean.iter_mut().for_each(|v| *v /= total);

    let mut covariance = vec![0.0; d * d];
    for (flat, ld) in log_density.iter().enumerate() {
        let mut rem = flat;
        let mut weight = 1.0;
        for j in 0..d {
            let idx = rem % spec.points;
            rem /= spec.points;
            theta[j] = axes[j][idx];
            weight *= axis_weight(j, idx);
        }
        let mass = weight * (ld - max_log).exp();
        for j in 0..d {
            for k in 0..d {
                covariance[j * d + k] += mass * (theta[j] - mean[j]) * (theta[k] - mean[k]);
            }
        }
    }
    covariance.iter_mut().for_each(|v| *v /= total);

    Ok(PosteriorMoments { mean, covariance })
}

/// How an SMH study kernel resolves its truncation threshold per data size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Never fall back to full MH.
    None,
    /// `R = m`: never costlier than MH on average.
    FactorCount,
    Fixed(f64),
}

impl Truncation {
    fn resolve(self, factor_count: usize) -> f64 {
        match self {
            Truncation::None => f64::INFINITY,
            Truncation::FactorCount => factor_count as f64,
            Truncation::Fixed(r) => r,
        }
    }
}

/// Kernel selection for study cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StudyKernel {
    Mh,
    Smh {
        order: SurrogateOrder,
        truncation: Truncation,
    },
    FmhNaive,
}

impl StudyKernel {
    pub fn label(&self) -> &'static str {
        match self {
            StudyKernel::Mh => "mh",
            StudyKernel::Smh {
                order: SurrogateOrder::First,
                ..
            } => "smh-1",
            StudyKernel::Smh {
                order: SurrogateOrder::Second,
                ..
            } => "smh-2",
            StudyKernel::FmhNaive => "fmh-naive",
        }
    }

    fn surrogate_order(&self) -> SurrogateOrder {
        match self {
            // MH and the naive kernel only need the aggregate derivatives
            // for proposals; a first-order surrogate carries them without
            // the per-factor Hessian storage.
            StudyKernel::Mh | StudyKernel::FmhNaive => SurrogateOrder::First,
            StudyKernel::Smh { order, .. } => *order,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScalingStudyConfig {
    pub model: ModelKind,
    pub dim: usize,
    /// Strictly increasing data sizes; at least 4 for the slope fit.
    pub n_grid: Vec<usize>,
    pub kernels: Vec<StudyKernel>,
    pub proposal: ProposalKind,
    /// Post burn-in iterations per chain.
    pub sampling_iterations: usize,
    pub burn_in: usize,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct KernelSeries {
    pub label: String,
    /// Mean factor evaluations per iteration, one entry per grid size
    /// (averaged over repetitions).
    pub mean_evaluations: Vec<f64>,
    pub accept_rate: Vec<f64>,
    pub ess_per_sec: Vec<f64>,
    /// Least-squares slope of log mean evaluations against log n.
    pub slope: f64,
    pub slope_se: f64,
    /// Whether the transient-regime guard dropped the smallest size from
    /// the fit.
    pub dropped_smallest_n: bool,
}

#[derive(Debug, Clone)]
pub struct ScalingStudyResult {
    pub n_grid: Vec<usize>,
    pub series: Vec<KernelSeries>,
}

#[derive(Debug, Clone, Copy)]
struct CellStats {
    mean_evaluations: f64,
    accept_rate: f64,
    ess_first: f64,
    wall_secs: f64,
}

// One (kernel, n, repetition) cell: fresh data, mode, surrogate, proposal,
// chain. The cell index seeds every random component, so results do not
// depend on scheduling.
#[allow(clippy::too_many_arguments)]
fn run_cell(
    model_kind: ModelKind,
    dim: usize,
    n: usize,
    kernel: StudyKernel,
    proposal_kind: ProposalKind,
    sampling_iterations: usize,
    burn_in: usize,
    seed: u64,
    cell: u64,
) -> Result<CellStats> {
    let data = generate_synthetic(n, dim, model_kind, seed ^ (cell << 1 | 1))?;
    enum Built {
        Logistic(crate::model::LogisticRegression),
        Robust(crate::model::RobustLinearRegression),
    }
    let built = match model_kind {
        ModelKind::LogisticRegression => Built::Logistic(build_logistic_model(data)?),
        ModelKind::RobustLinearRegression { nu } => {
            Built::Robust(build_robust_regression_model(data, nu)?)
        }
    };
    let model: &dyn FactorModel = match &built {
        Built::Logistic(m) => m,
        Built::Robust(m) => m,
    };

    let mut mode_rng = derived_rng(seed, Stream::ModeFinder, cell as u64 & 0xffff_ffff);
    let mode = find_mode(model, &ModeConfig::default(), &mut mode_rng)?;
    let surrogate = TaylorSurrogate::build(model, &mode.theta_hat, kernel.surrogate_order())?;
    let proposal = make_proposal(proposal_kind, n, &surrogate)?;

    let config = KernelConfig {
        kind: match kernel {
            StudyKernel::Mh => KernelKind::Mh,
            StudyKernel::Smh { order, truncation } => KernelKind::Smh {
                order,
                truncation: truncation.resolve(model.factor_count()),
            },
            StudyKernel::FmhNaive => KernelKind::FmhNaive,
        },
        iterations: burn_in + sampling_iterations,
        burn_in,
        thin: 1,
        seed: seed ^ (cell << 1),
    };
    let trace = match kernel {
        StudyKernel::FmhNaive => {
            let bounds = LipschitzBounds::from_gradient_bounds(model)?;
            run_naive_fmh(model, &bounds, &proposal, &config, &mode.theta_hat)?
        }
        _ => run_chain(
            model,
            Some(&surrogate),
            &proposal,
            &config,
            &mode.theta_hat,
        )?,
    };

    Ok(CellStats {
        mean_evaluations: trace.mean_evaluations(),
        accept_rate: trace.mean_acceptance(),
        ess_first: ess(&trace.coordinate(0)),
        wall_secs: trace.wall_time().as_secs_f64().max(1e-12),
    })
}

#[derive(Debug, Clone, Copy)]
struct LineFit {
    slope: f64,
    intercept: f64,
    slope_se: f64,
    /// Residual variance (df = k - 2).
    s2: f64,
    x_bar: f64,
    sxx: f64,
    points: usize,
}

fn fit_line(x: &[f64], y: &[f64]) -> LineFit {
    let k = x.len() as f64;
    let x_bar = x.iter().sum::<f64>() / k;
    let y_bar = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - x_bar) * (v - x_bar)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| (a - x_bar) * (b - y_bar))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let ssr: f64 = x
        .iter()
        .zip(y.iter())
        .map(|(a, b)| {
            let r = b - (intercept + slope * a);
            r * r
        })
        .sum();
    let dof = (k - 2.0).max(1.0);
    let s2 = ssr / dof;
    LineFit {
        slope,
        intercept,
        slope_se: (s2 / sxx).sqrt(),
        s2,
        x_bar,
        sxx,
        points: x.len(),
    }
}

fn fit_scaling_slope(n_grid: &[usize], mean_evals: &[f64]) -> (f64, f64, bool) {
    let xs: Vec<f64> = n_grid.iter().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = mean_evals.iter().map(|e| e.max(1e-300).ln()).collect();
    let full = fit_line(&xs, &ys);
    // Transient-regime guard: the smallest size may sit off the asymptote.
    // Judge it by its externally studentized (leave-one-out predictive)
    // residual; the internal version is bounded by sqrt(k-2) on small grids
    // and would never flag anything.
    if xs.len() > 3 {
        let tail = fit_line(&xs[1..], &ys[1..]);
        let predicted = tail.intercept + tail.slope * xs[0];
        let residual = ys[0] - predicted;
        let spread =
            1.0 + 1.0 / tail.points as f64 + (xs[0] - tail.x_bar).powi(2) / tail.sxx;
        let predictive_se = (tail.s2 * spread).sqrt();
        let outlier = if predictive_se > 0.0 {
            (residual / predictive_se).abs() > 3.0
        } else {
            residual.abs() > 1e-9
        };
        if outlier {
            return (tail.slope, tail.slope_se, true);
        }
    }
    (full.slope, full.slope_se, false)
}

/// Evaluation-cost scaling across data sizes: for each `(kernel, n,
/// repetition)` cell, generate data, locate the mode, build the surrogate,
/// run the chain, and average; then fit the log-log slope of mean
/// evaluations per iteration. Cells run in parallel.
pub fn scaling_study(config: &ScalingStudyConfig) -> Result<ScalingStudyResult> {
    if config.n_grid.len() < 4 {
        return Err(Error::InvalidInput("scaling grid needs at least 4 sizes".into()));
    }
    if !config.n_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidInput("scaling grid must be strictly increasing".into()));
    }
    if config.repetitions == 0 || config.kernels.is_empty() {
        return Err(Error::InvalidInput("need at least one kernel and repetition".into()));
    }

    let mut jobs = Vec::new();
    for (ki, kernel) in config.kernels.iter().enumerate() {
        for (ni, &n) in config.n_grid.iter().enumerate() {
            for rep in 0..config.repetitions {
                jobs.push((ki, ni, n, *kernel, rep));
            }
        }
    }
    let stats: Result<Vec<((usize, usize), CellStats)>> = jobs
        .par_iter()
        .map(|&(ki, ni, n, kernel, rep)| {
            let cell = ((ki as u64) << 24) | ((ni as u64) << 16) | rep as u64;
            run_cell(
                config.model,
                config.dim,
                n,
                kernel,
                config.proposal,
                config.sampling_iterations,
                config.burn_in,
                config.seed,
                cell,
            )
            .map(|s| ((ki, ni), s))
        })
        .collect();
    let stats = stats?;

    let grid_len = config.n_grid.len();
    let mut series = Vec::with_capacity(config.kernels.len());
    for (ki, kernel) in config.kernels.iter().enumerate() {
        let mut mean_evaluations = vec![0.0; grid_len];
        let mut accept = vec![0.0; grid_len];
        let mut ess_rate = vec![0.0; grid_len];
        let mut counts = vec![0usize; grid_len];
        for ((k, ni), cell) in &stats {
            if *k != ki {
                continue;
            }
            mean_evaluations[*ni] += cell.mean_evaluations;
            accept[*ni] += cell.accept_rate;
            ess_rate[*ni] += cell.ess_first / cell.wall_secs;
            counts[*ni] += 1;
        }
        for ni in 0..grid_len {
            let c = counts[ni] as f64;
            mean_evaluations[ni] /= c;
            accept[ni] /= c;
            ess_rate[ni] /= c;
        }
        let (slope, slope_se, dropped) = fit_scaling_slope(&config.n_grid, &mean_evaluations);
        series.push(KernelSeries {
            label: kernel.label().to_string(),
            mean_evaluations,
            accept_rate: accept,
            ess_per_sec: ess_rate,
            slope,
            slope_se,
            dropped_smallest_n: dropped,
        });
    }
    Ok(ScalingStudyResult {
        n_grid: config.n_grid.clone(),
        series,
    })
}

#[derive(Debug, Clone)]
pub struct RhoStudyConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub n_grid: Vec<usize>,
    /// pCN mixing parameters, each in [0, 1).
    pub rho_grid: Vec<f64>,
    pub kernel: StudyKernel,
    pub sampling_iterations: usize,
    pub burn_in: usize,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct RhoCell {
    pub n: usize,
    pub rho: f64,
    pub ess_first: f64,
    pub ess_per_sec: f64,
    pub accept_rate: f64,
}

#[derive(Debug, Clone)]
pub struct RhoStudyResult {
    pub n_grid: Vec<usize>,
    pub rho_grid: Vec<f64>,
    /// Row-major over (n, rho), averaged over repetitions.
    pub cells: Vec<RhoCell>,
}

/// Sweep the pCN mixing parameter across data sizes, recording ESS rate and
/// acceptance for the first coordinate.
pub fn rho_study(config: &RhoStudyConfig) -> Result<RhoStudyResult> {
    if config.rho_grid.is_empty() || config.n_grid.is_empty() {
        return Err(Error::InvalidInput("empty study grid".into()));
    }
    if config.rho_grid.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(Error::InvalidInput("rho values must lie in [0, 1)".into()));
    }
    if config.repetitions == 0 {
        return Err(Error::InvalidInput("need at least one repetition".into()));
    }

    let mut jobs = Vec::new();
    for (ni, &n) in config.n_grid.iter().enumerate() {
        for (ri, &rho) in config.rho_grid.iter().enumerate() {
            for rep in 0..config.repetitions {
                jobs.push((ni, n, ri, rho, rep));
            }
        }
    }
    let stats: Result<Vec<((usize, usize), CellStats)>> = jobs
        .par_iter()
        .map(|&(ni, n, ri, rho, rep)| {
            let cell = ((ni as u64) << 24) | ((ri as u64) << 16) | rep as u64;
            run_cell(
                config.model,
                config.dim,
                n,
                config.kernel,
                ProposalKind::Pcn { rho },
                config.sampling_iterations,
                config.burn_in,
                config.seed,
                cell,
            )
            .map(|s| ((ni, ri), s))
        })
        .collect();
    let stats = stats?;

    let mut cells = Vec::with_capacity(config.n_grid.len() * config.rho_grid.len());
    for (ni, &n) in config.n_grid.iter().enumerate() {
        for (ri, &rho) in config.rho_grid.iter().enumerate() {
            let mut ess_first = 0.0;
            let mut rate = 0.0;
            let mut accept = 0.0;
            let mut count = 0.0;
            for ((a, b), cell) in &stats {
                if *a == ni && *b == ri {
                    ess_first += cell.ess_first;
                    rate += cell.ess_first / cell.wall_secs;
                    accept += cell.accept_rate;
                    count += 1.0;
                }
            }
            cells.push(RhoCell {
                n,
                rho,
                ess_first: ess_first / count,
                ess_per_sec: rate / count,
                accept_rate: accept / count,
            });
        }
    }
    Ok(RhoStudyResult {
        n_grid: config.n_grid.clone(),
        rho_grid: config.rho_grid.clone(),
        cells,
    })
}
