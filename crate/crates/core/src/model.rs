//! Factorized targets: the model interface, the two built-in regression
//! models with closed-form derivative bounds, dataset ingestion, and
//! synthetic data generation.
//!
//! A target is a potential `U(theta) = sum_i U_i(theta)` over `m` factors
//! (one per observation for the built-in models, which use a flat prior).
//! Each factor exposes exact first and second derivatives plus global bounds
//! `ubar(order, i) >= sup_theta max_{|beta|=order} |d^beta U_i(theta)|` for
//! orders 1..=3; those bounds drive the surrogate intensity machinery.

use crate::error::{Error, Result};
use crate::rng::{derived_rng, Stream};
use rand::Rng;
use rand_distr::StandardNormal;
use std::fs;
use std::path::Path;

/// Rows of covariates plus one response per row.
#[derive(Debug, Clone)]
pub struct Dataset {
    covariates: Vec<f64>, // n * d, row-major
    responses: Vec<f64>,
    n: usize,
    d: usize,
}

impl Dataset {
    pub fn new(covariates: Vec<f64>, responses: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput("dataset needs n >= 1 and d >= 1".into()));
        }
        if covariates.len() != n * d {
            return Err(Error::InvalidInput(format!(
                "covariate buffer has {} entries, expected {}",
                covariates.len(),
                n * d
            )));
        }
        if responses.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} responses for {} rows",
                responses.len(),
                n
            )));
        }
        if covariates.iter().chain(responses.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("dataset contains non-finite values".into()));
        }
        Ok(Self {
            covariates,
            responses,
            n,
            d,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn response(&self, i: usize) -> f64 {
        self.responses[i]
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    fn responses_binary(&self) -> bool {
        self.responses.iter().all(|&y| y == 0.0 || y == 1.0)
    }
}

/// Which built-in model a dataset feeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    LogisticRegression,
    /// Student-t residual regression with `nu` degrees of freedom.
    RobustLinearRegression { nu: f64 },
}

/// A factorized target `U = sum_i U_i` with exact derivatives and global
/// derivative bounds per factor.
///
/// Implementations must be pure: evaluators may run concurrently from many
/// chains over a shared model.
pub trait FactorModel: Send + Sync {
    fn dim(&self) -> usize;
    fn factor_count(&self) -> usize;

    /// `U_i(theta)`, finite for all finite `theta`.
    fn factor_potential(&self, i: usize, theta: &[f64]) -> f64;

    /// Gradient of `U_i` written into `out` (length `dim`).
    fn factor_gradient(&self, i: usize, theta: &[f64], out: &mut [f64]);

    /// Hessian of `U_i` written into `out` (row-major, length `dim * dim`).
    fn factor_hessian(&self, i: usize, theta: &[f64], out: &mut [f64]);

    /// `ubar(order, i)`: a global bound on every order-`order` partial
    /// derivative of `U_i`. Supported orders are 1, 2 and 3.
    fn derivative_bound(&self, order: usize, i: usize) -> f64;

    /// `U(theta) = sum_i U_i(theta)`.
    fn total_potential(&self, theta: &[f64]) -> f64 {
        (0..self.factor_count())
            .map(|i| self.factor_potential(i, theta))
            .sum()
    }

    /// Gradient of the total potential.
    fn total_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut acc = vec![0.0; d];
        let mut buf = vec![0.0; d];
        for i in 0..self.factor_count() {
            self.factor_gradient(i, theta, &mut buf);
            for (a, b) in acc.iter_mut().zip(buf.iter()) {
                *a += b;
            }
        }
        acc
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

// log(1 + exp(z)) without overflow for large |z|.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bayesian logistic regression with a flat prior: one factor per row,
/// `U_i(theta) = log(1 + exp(theta . x_i)) - y_i * (theta . x_i)`.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    data: Dataset,
    bounds: [Vec<f64>; 3],
}

/// Logistic model over binary responses; errors if any response is not 0/1.
pub fn build_logistic_model(data: Dataset) -> Result<LogisticRegression> {
    if !data.responses_binary() {
        return Err(Error::InvalidInput(
            "logistic regression needs responses in {0, 1}".into(),
        ));
    }
    // Every bound is a function of max_j |x_ij| alone; precompute per row.
    let n = data.len();
    let mut b1 = Vec::with_capacity(n);
    let mut b2 = Vec::with_capacity(n);
    let mut b3 = Vec::with_capacity(n);
    for i in 0..n {
        let mx = data.row(i).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        b1.push(mx);
        b2.push(0.25 * mx * mx);
        b3.push(mx * mx * mx / (6.0 * 3.0f64.sqrt()));
    }
    Ok(LogisticRegression {
        data,
        bounds: [b1, b2, b3],
    })
}

impl LogisticRegression {
    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

impl FactorModel for LogisticRegression {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn factor_count(&self) -> usize {
        self.data.len()
    }

    fn factor_potential(&self, i: usize, theta: &[f64]) -> f64 {
        let z = dot(theta, self.data.row(i));
        softplus(z) - self.data.response(i) * z
    }

    fn factor_gradient(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let x = self.data.row(i);
        let s = sigmoid(dot(theta, x)) - self.data.response(i);
        for (o, xi) in out.iter_mut().zip(x.iter()) {
            *o = s * xi;
        }
    }

    fn factor_hessian(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let x = self.data.row(i);
        let s = sigmoid(dot(theta, x));
        let w = s * (1.0 - s);
        let d = x.len();
        for j in 0..d {
            for k in 0..d {
                out[j * d + k] = w * x[j] * x[k];
            }
        }
    }

    fn derivative_bound(&self, order: usize, i: usize) -> f64 {
        self.bounds[order - 1][i]
    }
}

/// Robust linear regression with Student-t residuals and a flat prior:
/// `U_i(theta) = (nu+1)/2 * log(1 + (y_i - theta . x_i)^2 / nu)`.
#[derive(Debug, Clone)]
pub struct RobustLinearRegression {
    data: Dataset,
    nu: f64,
    bounds: [Vec<f64>; 3],
}

pub fn build_robust_regression_model(data: Dataset, nu: f64) -> Result<RobustLinearRegression> {
    if !(nu > 0.0) {
        return Err(Error::InvalidInput(format!(
            "degrees of freedom must be positive, got {nu}"
        )));
    }
    let n = data.len();
    let c1 = (nu + 1.0) / (2.0 * nu.sqrt());
    let c2 = (nu + 1.0) / nu;
    let c3 = (nu + 1.0) * (3.0 + 2.0 * 2.0f64.sqrt()) / (4.0 * nu.powf(1.5));
    let mut b1 = Vec::with_capacity(n);
    let mut b2 = Vec::with_capacity(n);
    let mut b3 = Vec::with_capacity(n);
    for i in 0..n {
        let mx = data.row(i).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        b1.push(c1 * mx);
        b2.push(c2 * mx * mx);
        b3.push(c3 * mx * mx * mx);
    }
    Ok(RobustLinearRegression {
        data,
        nu,
        bounds: [b1, b2, b3],
    })
}

impl RobustLinearRegression {
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

impl FactorModel for RobustLinearRegression {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn factor_count(&self) -> usize {
        self.data.len()
    }

    fn factor_potential(&self, i: usize, theta: &[f64]) -> f64 {
        let r = self.data.response(i) - dot(theta, self.data.row(i));
        0.5 * (self.nu + 1.0) * (r * r / self.nu).ln_1p()
    }

    fn factor_gradient(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let x = self.data.row(i);
        let r = self.data.response(i) - dot(theta, x);
        let s = -(self.nu + 1.0) * r / (self.nu + r * r);
        for (o, xi) in out.iter_mut().zip(x.iter()) {
            *o = s * xi;
        }
    }

    fn factor_hessian(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let x = self.data.row(i);
        let r = self.data.response(i) - dot(theta, x);
        let q = self.nu + r * r;
        let w = (self.nu + 1.0) * (self.nu - r * r) / (q * q);
        let d = x.len();
        for j in 0..d {
            for k in 0..d {
                out[j * d + k] = w * x[j] * x[k];
            }
        }
    }

    fn derivative_bound(&self, order: usize, i: usize) -> f64 {
        self.bounds[order - 1][i]
    }
}

/// Diagonal-precision Gaussian potential split evenly over `m` factors:
/// `U_i(theta) = sum_j prec_j (theta_j - mean_j)^2 / (2 m)`.
///
/// Handy as a target with a known posterior: second-order surrogates are
/// exact on it (the third-derivative bound is zero), and the quadrature
/// moments are available in closed form.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: Vec<f64>,
    precision: Vec<f64>,
    factors: usize,
}

impl GaussianTarget {
    pub fn new(mean: Vec<f64>, precision: Vec<f64>, factors: usize) -> Result<Self> {
        if mean.len() != precision.len() || mean.is_empty() {
            return Err(Error::InvalidInput(
                "mean and precision must have equal, nonzero length".into(),
            ));
        }
        if factors == 0 {
            return Err(Error::InvalidInput("need at least one factor".into()));
        }
        if precision.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::InvalidInput("precision entries must be positive".into()));
        }
        Ok(Self {
            mean,
            precision,
            factors,
        })
    }
}

impl FactorModel for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn factor_count(&self) -> usize {
        self.factors
    }

    fn factor_potential(&self, _i: usize, theta: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((t, m), p) in theta.iter().zip(&self.mean).zip(&self.precision) {
            acc += p * (t - m) * (t - m);
        }
        0.5 * acc / self.factors as f64
    }

    fn factor_gradient(&self, _i: usize, theta: &[f64], out: &mut [f64]) {
        for (o, ((t, m), p)) in out
            .iter_mut()
            .zip(theta.iter().zip(&self.mean).zip(&self.precision))
        {
            *o = p * (t - m) / self.factors as f64;
        }
    }

    fn factor_hessian(&self, _i: usize, theta: &[f64], out: &mut [f64]) {
        let d = theta.len();
        out.fill(0.0);
        for j in 0..d {
            out[j * d + j] = self.precision[j] / self.factors as f64;
        }
    }

    fn derivative_bound(&self, order: usize, _i: usize) -> f64 {
        match order {
            1 => f64::INFINITY, // a quadratic has no global gradient bound
            2 => self.precision.iter().cloned().fold(0.0, f64::max) / self.factors as f64,
            _ => 0.0,
        }
    }
}

/// One extra factor with caller-supplied evaluators and derivative bounds;
/// the usual way to attach a non-flat prior to a built-in model.
pub struct UserFactor {
    pub potential: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub gradient: Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
    pub hessian: Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
    /// `ubar(order, .)` for orders 1..=3.
    pub derivative_bounds: [f64; 3],
}

/// A base model extended with extra factors (appended after the base ones).
pub struct AugmentedModel<M: FactorModel> {
    base: M,
    extras: Vec<UserFactor>,
}

impl<M: FactorModel> AugmentedModel<M> {
    pub fn new(base: M, extras: Vec<UserFactor>) -> Self {
        Self { base, extras }
    }
}

impl<M: FactorModel> FactorModel for AugmentedModel<M> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn factor_count(&self) -> usize {
        self.base.factor_count() + self.extras.len()
    }

    fn factor_potential(&self, i: usize, theta: &[f64]) -> f64 {
        let m = self.base.factor_count();
        if i < m {
            self.base.factor_potential(i, theta)
        } else {
            (self.extras[i - m].potential)(theta)
        }
    }

    fn factor_gradient(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let m = self.base.factor_count();
        if i < m {
            self.base.factor_gradient(i, theta, out)
        } else {
            (self.extras[i - m].gradient)(theta, out)
        }
    }

    fn factor_hessian(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let m = self.base.factor_count();
        if i < m {
            self.base.factor_hessian(i, theta, out)
        } else {
            (self.extras[i - m].hessian)(theta, out)
        }
    }

    fn derivative_bound(&self, order: usize, i: usize) -> f64 {
        let m = self.base.factor_count();
        if i < m {
            self.base.derivative_bound(order, i)
        } else {
            self.extras[i - m].derivative_bounds[order - 1]
        }
    }
}

/// Synthetic data: covariates i.i.d. standard normal. Logistic responses are
/// drawn from the model at `theta = (1, ..., 1)`; robust-regression responses
/// are `y_i = sum_j x_ij + eps` with standard normal noise. Deterministic
/// given the seed.
pub fn generate_synthetic(n: usize, d: usize, kind: ModelKind, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("need n >= 1 and d >= 1".into()));
    }
    let mut rng = derived_rng(seed, Stream::Data, 0);
    let mut covariates = Vec::with_capacity(n * d);
    let mut responses = Vec::with_capacity(n);
    for _ in 0..n {
        let start = covariates.len();
        for _ in 0..d {
            covariates.push(rng.sample::<f64, _>(StandardNormal));
        }
        let row_sum: f64 = covariates[start..].iter().sum();
        let y = match kind {
            ModelKind::LogisticRegression => {
                let p = sigmoid(row_sum);
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            ModelKind::RobustLinearRegression { .. } => {
                row_sum + rng.sample::<f64, _>(StandardNormal)
            }
        };
        responses.push(y);
    }
    Dataset::new(covariates, responses, n, d)
}

/// Parse a rectangular numeric CSV; the last column is the response. A single
/// leading header line is skipped when any of its cells is non-numeric.
pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            cells.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if let Some(w) = width {
                    if values.len() != w {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("expected {w} columns, found {}", values.len()),
                        });
                    }
                } else {
                    if values.len() < 2 {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "need at least one covariate column plus a response".into(),
                        });
                    }
                    width = Some(values.len());
                }
                rows.push(values);
            }
            Err(e) => {
                if rows.is_empty() && width.is_none() {
                    // Header line; skip it.
                    continue;
                }
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-numeric cell: {e}"),
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("CSV contains no data rows".into()));
    }
    let n = rows.len();
    let d = rows[0].len() - 1;
    let mut covariates = Vec::with_capacity(n * d);
    let mut responses = Vec::with_capacity(n);
    for row in rows {
        covariates.extend_from_slice(&row[..d]);
        responses.push(row[d]);
    }
    Dataset::new(covariates, responses, n, d)
}
