//! The Gaussian proposal family `theta' ~ Normal(A theta + b, C)`.
//!
//! Four stock parameterizations are provided, all scaled so step sizes track
//! the `1/sqrt(n)` concentration of the target:
//!
//! * scaled random walk: `A = I`, `b = 0`, `C = sigma^2/n I`
//! * preconditioned random walk: `A = I`, `b = 0`, `C = sigma^2 H^-1`
//! * first-order reversible: `A = I`, `b = -sigma/(2n) g`, `C = sigma/n I`
//! * pCN: `A = sqrt(rho) I`, `C = (1-rho) H^-1`,
//!   `b = (1 - sqrt(rho))(c - H^-1 g)`
//!
//! with `g`, `H` the aggregate gradient and Hessian at the surrogate's
//! expansion point `c`. The last two are reversible with respect to the
//! first- and second-order surrogate densities respectively; a kernel may
//! then skip the solitary surrogate-ratio Bernoulli trial. Reversibility is
//! checked numerically at construction: `q` is `pi_hat`-reversible for
//! `-log pi_hat = theta' D theta / 2 + e . theta + const` if and only if
//!
//! ```text
//! A' C^-1 = C^-1 A        A^2 = I - C D        (A' + I) b = -C e
//! ```

use crate::error::{Error, Result};
use crate::surrogate::{SurrogateOrder, TaylorSurrogate};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Which surrogate density (if any) the proposal is reversible against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReversibleFlag {
    None,
    FirstOrder,
    SecondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProposalKind {
    /// Random walk with covariance `sigma^2 / n * I`.
    ScaledRw { sigma: f64 },
    /// Random walk with covariance `sigma^2 * H^-1`.
    PreconditionedRw { sigma: f64 },
    /// Reversible against the first-order surrogate.
    FirstOrderReversible { sigma: f64 },
    /// Preconditioned Crank-Nicolson, reversible against the second-order
    /// surrogate; `rho = 0` draws independently from it.
    Pcn { rho: f64 },
}

#[derive(Debug, Clone)]
pub struct GaussianProposal {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DMatrix<f64>,
    chol_l: DMatrix<f64>, // lower Cholesky factor of C
    c_inv: DMatrix<f64>,
    log_det_c: f64,
    symmetric: bool, // A = I, b = 0: the density ratio cancels exactly
    reversible: ReversibleFlag,
}

const REVERSIBILITY_TOL: f64 = 1e-8;

/// Residuals of the three reversibility conditions for a candidate
/// quadratic log-density `theta' D theta / 2 + e . theta`.
pub fn reversibility_residual(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DMatrix<f64>,
    c_inv: &DMatrix<f64>,
    d_mat: &DMatrix<f64>,
    e: &DVector<f64>,
) -> f64 {
    let dim = a.nrows();
    let commute = a.transpose() * c_inv - c_inv * a;
    let involution = a * a - (DMatrix::identity(dim, dim) - c * d_mat);
    let drift = (a.transpose() + DMatrix::identity(dim, dim)) * b + c * e;
    let mut residual = 0.0f64;
    for v in commute.iter().chain(involution.iter()) {
        residual = residual.max(v.abs());
    }
    for v in drift.iter() {
        residual = residual.max(v.abs());
    }
    residual
}

impl GaussianProposal {
    /// Assemble from raw `(A, b, C)`; fails when `C` is not positive
    /// definite. `reversible` is the caller's claim and is not re-checked
    /// here; use [`make_proposal`] for the stock parameterizations, which do
    /// verify it.
    pub fn from_parts(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DMatrix<f64>,
        reversible: ReversibleFlag,
    ) -> Result<Self> {
        let dim = c.nrows();
        if a.nrows() != dim || a.ncols() != dim || b.len() != dim || c.ncols() != dim {
            return Err(Error::InvalidInput("proposal shapes disagree".into()));
        }
        let chol = Cholesky::new(c.clone()).ok_or_else(|| {
            Error::Numeric("proposal covariance is not positive definite".into())
        })?;
        let c_inv = chol.inverse();
        let chol_l = chol.l();
        let log_det_c = 2.0 * chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let symmetric = b.iter().all(|v| *v == 0.0) && a == DMatrix::identity(dim, dim);
        Ok(Self {
            a,
            b,
            c,
            chol_l,
            c_inv,
            log_det_c,
            symmetric,
            reversible,
        })
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn reversible_flag(&self) -> ReversibleFlag {
        self.reversible
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn linear_map(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// Draw `theta' = A theta + b + S z` with `S` the Cholesky factor of `C`.
    pub fn propose<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        let dim = self.dim();
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mean = &self.a * DVector::from_column_slice(theta) + &self.b;
        let out = mean + &self.chol_l * z;
        out.as_slice().to_vec()
    }

    /// `log q(from, to)` including the Gaussian normalization.
    pub fn log_density(&self, from: &[f64], to: &[f64]) -> f64 {
        let dim = self.dim();
        let mean = &self.a * DVector::from_column_slice(from) + &self.b;
        let resid = DVector::from_column_slice(to) - mean;
        let quad = (resid.transpose() * &self.c_inv * &resid)[(0, 0)];
        -0.5 * (quad + self.log_det_c + dim as f64 * (2.0 * std::f64::consts::PI).ln())
    }

    /// `log q(to, from) - log q(from, to)`; exactly zero for symmetric
    /// proposals.
    pub fn log_density_ratio(&self, from: &[f64], to: &[f64]) -> f64 {
        if self.symmetric {
            0.0
        } else {
            self.log_density(to, from) - self.log_density(from, to)
        }
    }

    /// Check the reversibility conditions against the quadratic log-density
    /// described by `(d_mat, e)`; returns the pass flag and the largest
    /// elementwise residual.
    pub fn verify_reversibility(&self, d_mat: &DMatrix<f64>, e: &DVector<f64>) -> (bool, f64) {
        let residual =
            reversibility_residual(&self.a, &self.b, &self.c, &self.c_inv, d_mat, e);
        (residual < REVERSIBILITY_TOL, residual)
    }
}

/// The quadratic coefficients `(D, e)` of `-log pi_hat_k` for a surrogate:
/// first order has `D = 0`, `e = g`; second order has `D = H`,
/// `e = g - H c`.
pub fn surrogate_quadratic_coefficients(
    surrogate: &TaylorSurrogate,
) -> (DMatrix<f64>, DVector<f64>) {
    let d = surrogate.dim();
    let g = DVector::from_column_slice(surrogate.total_gradient());
    let center = DVector::from_column_slice(surrogate.center());
    match surrogate.order() {
        SurrogateOrder::First => (DMatrix::zeros(d, d), g),
        SurrogateOrder::Second => {
            let h = DMatrix::from_row_slice(d, d, surrogate.total_hessian());
            let e = &g - &h * center;
            (h, e)
        }
    }
}

/// Build one of the stock proposals from the surrogate's aggregate data.
///
/// `n` is the data size used for `1/sqrt(n)` scaling of the random-walk
/// variants. Kinds that precondition on the Hessian require it positive
/// definite. For the reversible kinds the conditions are verified
/// numerically; on failure the flag is downgraded with a warning rather than
/// aborting, since the kernels stay exact either way (the flag only lets
/// them skip one Bernoulli trial).
pub fn make_proposal(
    kind: ProposalKind,
    n: usize,
    surrogate: &TaylorSurrogate,
) -> Result<GaussianProposal> {
    let d = surrogate.dim();
    let identity = DMatrix::<f64>::identity(d, d);
    let grad = DVector::from_column_slice(surrogate.total_gradient());
    let center = DVector::from_column_slice(surrogate.center());

    let hessian_inverse = || -> Result<DMatrix<f64>> {
        let h = DMatrix::from_row_slice(d, d, surrogate.total_hessian());
        let chol = Cholesky::new(h).ok_or_else(|| {
            Error::Numeric(
                "aggregate Hessian is not positive definite; refine the expansion point closer to the mode".into(),
            )
        })?;
        Ok(chol.inverse())
    };

    let (a, b, c, claimed) = match kind {
        ProposalKind::ScaledRw { sigma } => {
            check_positive(sigma, "sigma")?;
            (
                identity.clone(),
                DVector::zeros(d),
                &identity * (sigma * sigma / n as f64),
                ReversibleFlag::None,
            )
        }
        ProposalKind::PreconditionedRw { sigma } => {
            check_positive(sigma, "sigma")?;
            (
                identity.clone(),
                DVector::zeros(d),
                hessian_inverse()? * (sigma * sigma),
                ReversibleFlag::None,
            )
        }
        ProposalKind::FirstOrderReversible { sigma } => {
            check_positive(sigma, "sigma")?;
            (
                identity.clone(),
                &grad * (-0.5 * sigma / n as f64),
                &identity * (sigma / n as f64),
                ReversibleFlag::FirstOrder,
            )
        }
        ProposalKind::Pcn { rho } => {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::InvalidInput(format!(
                    "pCN requires rho in [0, 1), got {rho}"
                )));
            }
            let h_inv = hessian_inverse()?;
            let sqrt_rho = rho.sqrt();
            let b = (&center - &h_inv * &grad) * (1.0 - sqrt_rho);
            (
                &identity * sqrt_rho,
                b,
                h_inv * (1.0 - rho),
                ReversibleFlag::SecondOrder,
            )
        }
    };

    let mut proposal = GaussianProposal::from_parts(a, b, c, claimed)?;
    if claimed != ReversibleFlag::None {
        let (d_mat, e) = match claimed {
            ReversibleFlag::FirstOrder => {
                (DMatrix::zeros(d, d), grad.clone())
            }
            ReversibleFlag::SecondOrder => {
                let h = DMatrix::from_row_slice(d, d, surrogate.total_hessian());
                let e = &grad - &h * &center;
                (h, e)
            }
            ReversibleFlag::None => unreachable!(),
        };
        let (ok, residual) = proposal.verify_reversibility(&d_mat, &e);
        if !ok {
            log::warn!(
                "proposal failed the reversibility check (residual {residual:.3e}); \
                 downgrading to non-reversible"
            );
            proposal.reversible = ReversibleFlag::None;
        }
    }
    Ok(proposal)
}

fn check_positive(value: f64, name: &str) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {value}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_logistic_model, generate_synthetic, ModelKind};
    use crate::rng::{derived_rng, Stream};
    use crate::surrogate::TaylorSurrogate;
    use approx::assert_relative_eq;

    fn fixture(order: SurrogateOrder) -> (crate::model::LogisticRegression, TaylorSurrogate) {
        let data = generate_synthetic(200, 3, ModelKind::LogisticRegression, 61).unwrap();
        let model = build_logistic_model(data).unwrap();
        let center = vec![0.8, 1.1, 0.9]; // near the all-ones generator
        let surrogate = TaylorSurrogate::build(&model, &center, order).unwrap();
        (model, surrogate)
    }

    #[test]
    fn scaled_rw_covariance() {
        let (_, s) = fixture(SurrogateOrder::Second);
        let p = make_proposal(ProposalKind::ScaledRw { sigma: 1.0 }, 100, &s).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                let expected = if j == k { 0.01 } else { 0.0 };
                assert_relative_eq!(p.covariance()[(j, k)], expected);
            }
        }
        assert!(p.is_symmetric());
        assert_eq!(p.log_density_ratio(&[0.1, 0.2, 0.3], &[1.0, -1.0, 0.5]), 0.0);
    }

    #[test]
    fn pcn_zero_rho_is_independent_gaussian() {
        let (_, s) = fixture(SurrogateOrder::Second);
        let p = make_proposal(ProposalKind::Pcn { rho: 0.0 }, 200, &s).unwrap();
        assert!(p.linear_map().iter().all(|v| *v == 0.0));
        assert_eq!(p.reversible_flag(), ReversibleFlag::SecondOrder);
        // b = center - H^-1 g, C = H^-1.
        let d = 3;
        let h = DMatrix::from_row_slice(d, d, s.total_hessian());
        let h_inv = Cholesky::new(h).unwrap().inverse();
        let expected_b = DVector::from_column_slice(s.center())
            - &h_inv * DVector::from_column_slice(s.total_gradient());
        for j in 0..d {
            assert_relative_eq!(p.offset()[j], expected_b[j], max_relative = 1e-12);
            for k in 0..d {
                assert_relative_eq!(p.covariance()[(j, k)], h_inv[(j, k)], max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn first_order_proposal_passes_reversibility() {
        let (_, s) = fixture(SurrogateOrder::First);
        let p =
            make_proposal(ProposalKind::FirstOrderReversible { sigma: 1.0 }, 200, &s).unwrap();
        assert_eq!(p.reversible_flag(), ReversibleFlag::FirstOrder);
        let (d_mat, e) = surrogate_quadratic_coefficients(&s);
        let (ok, residual) = p.verify_reversibility(&d_mat, &e);
        assert!(ok, "residual {residual}");
    }

    #[test]
    fn pcn_passes_reversibility_against_second_order_coefficients() {
        let (_, s) = fixture(SurrogateOrder::Second);
        for rho in [0.0, 0.3, 0.9] {
            let p = make_proposal(ProposalKind::Pcn { rho }, 200, &s).unwrap();
            let (d_mat, e) = surrogate_quadratic_coefficients(&s);
            let (ok, residual) = p.verify_reversibility(&d_mat, &e);
            assert!(ok, "rho {rho}: residual {residual}");
        }
    }

    #[test]
    fn scaling_violation_fails_the_involution_condition() {
        let (_, s) = fixture(SurrogateOrder::First);
        let d = 3;
        let p = GaussianProposal::from_parts(
            DMatrix::identity(d, d) * 2.0,
            DVector::zeros(d),
            DMatrix::identity(d, d),
            ReversibleFlag::None,
        )
        .unwrap();
        let (d_mat, e) = surrogate_quadratic_coefficients(&s);
        let (ok, residual) = p.verify_reversibility(&d_mat, &e);
        assert!(!ok);
        assert!(residual >= 3.0); // A^2 - I = 3 I
    }

    #[test]
    fn tiny_covariance_proposes_near_current_state() {
        let (_, s) = fixture(SurrogateOrder::Second);
        let p = make_proposal(ProposalKind::ScaledRw { sigma: 1e-12 }, 1, &s).unwrap();
        let mut rng = derived_rng(0, Stream::Test, 30);
        let theta = [0.4, -0.7, 1.2];
        let proposed = p.propose(&theta, &mut rng);
        for (a, b) in theta.iter().zip(proposed.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn proposal_moments_match_parameters() {
        let (_, s) = fixture(SurrogateOrder::Second);
        let p = make_proposal(ProposalKind::Pcn { rho: 0.4 }, 200, &s).unwrap();
        let mut rng = derived_rng(1, Stream::Test, 31);
        let theta = [0.5, 0.9, 1.3];
        let trials = 100_000;
        let d = 3;
        let mut mean = vec![0.0; d];
        let mut cov = vec![0.0; d * d];
        let mut draws = Vec::with_capacity(trials);
        for _ in 0..trials {
            let x = p.propose(&theta, &mut rng);
            for j in 0..d {
                mean[j] += x[j];
            }
            draws.push(x);
        }
        mean.iter_mut().for_each(|v| *v /= trials as f64);
        for x in &draws {
            for j in 0..d {
                for k in 0..d {
                    cov[j * d + k] += (x[j] - mean[j]) * (x[k] - mean[k]);
                }
            }
        }
        cov.iter_mut().for_each(|v| *v /= trials as f64 - 1.0);

        let expected_mean =
            p.linear_map() * DVector::from_column_slice(&theta) + p.offset();
        for j in 0..d {
            let sd = p.covariance()[(j, j)].sqrt();
            let tol = 3.0 * sd / (trials as f64).sqrt();
            assert!(
                (mean[j] - expected_mean[j]).abs() < tol,
                "coordinate {j}: {} vs {}",
                mean[j],
                expected_mean[j]
            );
        }
        // Frobenius distance of the sample covariance within 5%.
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..d {
            for k in 0..d {
                num += (cov[j * d + k] - p.covariance()[(j, k)]).powi(2);
                den += p.covariance()[(j, k)].powi(2);
            }
        }
        assert!((num / den).sqrt() < 0.05, "relative Frobenius error {}", (num / den).sqrt());
    }

    #[test]
    fn log_density_matches_hand_computed_gaussian() {
        // d = 1: q(from, to) = Normal(to | 0.5 from + 0.25, 2.0)
        let p = GaussianProposal::from_parts(
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_element(1, 0.25),
            DMatrix::from_element(1, 1, 2.0),
            ReversibleFlag::None,
        )
        .unwrap();
        let from = [1.2];
        let to = [-0.4];
        let mean = 0.5 * from[0] + 0.25;
        let var = 2.0f64;
        let expected =
            -0.5 * ((to[0] - mean) * (to[0] - mean) / var + var.ln() + (2.0 * std::f64::consts::PI).ln());
        assert_relative_eq!(p.log_density(&from, &to), expected, max_relative = 1e-12);
        let ratio = p.log_density(&to, &from) - p.log_density(&from, &to);
        assert_relative_eq!(p.log_density_ratio(&from, &to), ratio, max_relative = 1e-12);
    }

    /// The joint symmetry that licenses dropping the solitary factor:
    /// `taylor(theta) - log q(theta, theta')` is symmetric for a reversible
    /// proposal.
    #[test]
    fn reversible_proposals_satisfy_joint_symmetry() {
        let cases = [
            (SurrogateOrder::First, ProposalKind::FirstOrderReversible { sigma: 1.0 }),
            (SurrogateOrder::Second, ProposalKind::Pcn { rho: 0.5 }),
        ];
        for (order, kind) in cases {
            let (_, s) = fixture(order);
            let p = make_proposal(kind, 200, &s).unwrap();
            let mut rng = derived_rng(2, Stream::Test, 32);
            for _ in 0..1000 {
                let a: Vec<f64> = (0..3)
                    .map(|_| s.center()[0] + 0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect();
                let b: Vec<f64> = (0..3)
                    .map(|_| s.center()[0] + 0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect();
                let f_ab = s.total_potential(&a) - p.log_density(&a, &b);
                let f_ba = s.total_potential(&b) - p.log_density(&b, &a);
                assert!(
                    (f_ab - f_ba).abs() < 1e-8,
                    "{order:?}: asymmetry {}",
                    f_ab - f_ba
                );
            }
        }
    }

    /// Random-walk step size: the expected squared jump is sigma^2 d / n.
    #[test]
    fn scaled_rw_jump_size_matches_formula() {
        let (_, s) = fixture(SurrogateOrder::First);
        let sigma = 1.0f64;
        let n = 100;
        let p = make_proposal(ProposalKind::ScaledRw { sigma }, n, &s).unwrap();
        let mut rng = derived_rng(4, Stream::Test, 34);
        let theta = [0.2, -0.4, 0.8];
        let trials = 100_000;
        let mut total = 0.0;
        let mut total_sq = 0.0;
        for _ in 0..trials {
            let proposed = p.propose(&theta, &mut rng);
            let jump: f64 = proposed
                .iter()
                .zip(theta.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += jump;
            total_sq += jump * jump;
        }
        let mean = total / trials as f64;
        let expected = sigma * sigma * 3.0 / n as f64;
        // Var of a chi-square(3) scaled: 2 d (sigma^2/n)^2.
        let var = total_sq / trials as f64 - mean * mean;
        let se = (var / trials as f64).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean squared jump {mean} vs {expected}"
        );
    }

    #[test]
    fn pcn_contracts_large_states() {
        let (_, s) = fixture(SurrogateOrder::Second);
        let p = make_proposal(ProposalKind::Pcn { rho: 0.49 }, 200, &s).unwrap();
        // Operator norm of A is sqrt(rho) < 1.
        let a = p.linear_map();
        for j in 0..3 {
            assert_relative_eq!(a[(j, j)], 0.7, max_relative = 1e-12);
        }
        let mut rng = derived_rng(3, Stream::Test, 33);
        let far: Vec<f64> = vec![1000.0 / 3.0f64.sqrt(); 3];
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut smaller = 0;
        let trials = 1000;
        for _ in 0..trials {
            if norm(&p.propose(&far, &mut rng)) < norm(&far) {
                smaller += 1;
            }
        }
        assert!(smaller > trials / 2, "median norm did not decrease: {smaller}/{trials}");
    }
}
