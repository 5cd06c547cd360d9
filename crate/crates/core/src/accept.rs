//! Acceptance evaluators: direct MH, the per-factor Bernoulli cascade, and
//! the Poisson-thinning path that makes the factorized acceptance cheap.
//!
//! All three simulate an accept/reject event with exactly the factorized
//! acceptance probability
//!
//! ```text
//! a(theta, theta') = [1 ^ pi_hat(theta') q(theta', theta) / (pi_hat(theta) q(theta, theta'))]
//!                    * prod_i [1 ^ exp(-factor_intensity_i)]
//! ```
//!
//! (the solitary surrogate term first, then one term per control-variate
//! factor), or the plain MH probability when every factor is evaluated
//! directly. The Poisson path draws
//!
//! ```text
//! N ~ Poisson(total_intensity_bound)
//! X_j ~ alias table over factor weights        (iid, with replacement)
//! B_j ~ Bernoulli(factor_intensity(X_j) / factor_intensity_bound(X_j))
//! ```
//!
//! and accepts iff every `B_j` is zero; marginally `P(accept)` equals the
//! factorized acceptance probability exactly, while only `N` factors are
//! touched. Every evaluator reports how many factors it actually evaluated,
//! counting one unit per factor index visited by the MH scan and one unit
//! per `(X_j, B_j)` pair simulated on the Poisson path (duplicates included;
//! each pair processes one data point).

use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::model::FactorModel;
use crate::poisson::sample_poisson;
use crate::surrogate::TaylorSurrogate;
use rand::Rng;

/// Slack for the runtime check `factor_intensity <= factor_intensity_bound`:
/// the inequality is exact mathematics, so anything beyond rounding noise is
/// a bound bug worth aborting on.
const BOUND_SLACK: f64 = 1e-9;

/// What one acceptance decision did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptanceOutcome {
    pub accepted: bool,
    /// Factor evaluation units consumed (see module docs for the counting
    /// convention).
    pub factor_evaluations: u64,
    /// The Poisson draw `N`, when the thinning path ran.
    pub poisson_draw: Option<u64>,
    /// Whether the solitary surrogate-ratio trial was simulated.
    pub solitary_factor_evaluated: bool,
}

#[inline]
fn bernoulli_log<R: Rng + ?Sized>(log_prob: f64, rng: &mut R) -> bool {
    // P(success) = min(1, exp(log_prob)); avoids exp overflow for positives.
    log_prob >= 0.0 || rng.random::<f64>() < log_prob.exp()
}

/// Plain Metropolis-Hastings acceptance: evaluates all `m` factors of the
/// potential at the proposed state and flips one coin.
///
/// `log_q_ratio` is `log q(to, from) - log q(from, to)`.
pub fn accept_mh<R: Rng + ?Sized>(
    model: &dyn FactorModel,
    from: &[f64],
    to: &[f64],
    log_q_ratio: f64,
    rng: &mut R,
) -> AcceptanceOutcome {
    let log_ratio = model.total_potential(from) - model.total_potential(to) + log_q_ratio;
    AcceptanceOutcome {
        accepted: bernoulli_log(log_ratio, rng),
        factor_evaluations: model.factor_count() as u64,
        poisson_draw: None,
        solitary_factor_evaluated: false,
    }
}

/// Factorized acceptance simulated as a cascade: the solitary trial first,
/// then one Bernoulli per factor, rejecting as soon as any trial fails.
///
/// `solitary_log_ratio` is
/// `log [pi_hat(to) q(to, from)] - log [pi_hat(from) q(from, to)]`; pass
/// `None` when the proposal is reversible against the surrogate (the trial
/// succeeds with probability one and is skipped).
pub fn accept_fmh_cascade<R: Rng + ?Sized>(
    model: &dyn FactorModel,
    surrogate: &TaylorSurrogate,
    from: &[f64],
    to: &[f64],
    solitary_log_ratio: Option<f64>,
    rng: &mut R,
) -> AcceptanceOutcome {
    let solitary_evaluated = solitary_log_ratio.is_some();
    if let Some(lr) = solitary_log_ratio {
        if !bernoulli_log(lr, rng) {
            return AcceptanceOutcome {
                accepted: false,
                factor_evaluations: 0,
                poisson_draw: None,
                solitary_factor_evaluated: true,
            };
        }
    }
    let diff_from = surrogate.diff_from_center(from);
    let diff_to = surrogate.diff_from_center(to);
    let mut evaluations = 0u64;
    for i in 0..model.factor_count() {
        let intensity =
            surrogate.factor_intensity_given_diffs(model, i, from, to, &diff_from, &diff_to);
        evaluations += 1;
        if !bernoulli_log(-intensity, rng) {
            return AcceptanceOutcome {
                accepted: false,
                factor_evaluations: evaluations,
                poisson_draw: None,
                solitary_factor_evaluated: solitary_evaluated,
            };
        }
    }
    AcceptanceOutcome {
        accepted: true,
        factor_evaluations: evaluations,
        poisson_draw: None,
        solitary_factor_evaluated: solitary_evaluated,
    }
}

// The shared Poisson-thinning pass: draw N, then thin factor indexes from the
// alias table until a trial fails. `factor_intensity` and `factor_weight`
// close over whichever bound family the caller uses.
fn poisson_thinning_pass<R, FI, FW>(
    displacement: f64,
    total_weight: f64,
    alias: Option<&AliasTable>,
    factor_intensity: FI,
    factor_weight: FW,
    rng: &mut R,
) -> Result<(bool, u64, u64)>
where
    R: Rng + ?Sized,
    FI: Fn(usize) -> f64,
    FW: Fn(usize) -> f64,
{
    let mean = displacement * total_weight;
    let n = sample_poisson(mean, rng);
    if n == 0 {
        return Ok((true, 0, 0));
    }
    let alias = alias.expect("positive Poisson mean requires an alias table");
    let mut evaluations = 0u64;
    for _ in 0..n {
        let idx = alias.sample(rng);
        let intensity = factor_intensity(idx);
        let bound = displacement * factor_weight(idx);
        evaluations += 1;
        let ratio = intensity / bound;
        if ratio > 1.0 + BOUND_SLACK {
            return Err(Error::BoundViolation {
                factor: idx,
                intensity,
                bound,
            });
        }
        if rng.random::<f64>() < ratio.min(1.0) {
            return Ok((false, evaluations, n));
        }
    }
    Ok((true, evaluations, n))
}

/// Factorized acceptance by Poisson thinning over the surrogate bounds.
///
/// `alias` must be built over `surrogate.factor_weights()`; pass `None` only
/// when the total weight is zero (exact surrogates). The solitary trial is
/// simulated first, exactly as in the cascade. Errors when a sampled factor's
/// exact intensity exceeds its bound, which the Taylor remainder construction
/// rules out for correct models.
pub fn accept_smh_poisson<R: Rng + ?Sized>(
    model: &dyn FactorModel,
    surrogate: &TaylorSurrogate,
    alias: Option<&AliasTable>,
    from: &[f64],
    to: &[f64],
    solitary_log_ratio: Option<f64>,
    rng: &mut R,
) -> Result<AcceptanceOutcome> {
    let solitary_evaluated = solitary_log_ratio.is_some();
    if let Some(lr) = solitary_log_ratio {
        if !bernoulli_log(lr, rng) {
            return Ok(AcceptanceOutcome {
                accepted: false,
                factor_evaluations: 0,
                poisson_draw: None,
                solitary_factor_evaluated: true,
            });
        }
    }
    let diff_from = surrogate.diff_from_center(from);
    let diff_to = surrogate.diff_from_center(to);
    let displacement = surrogate.displacement_factor(from, to);
    let (accepted, evaluations, n) = poisson_thinning_pass(
        displacement,
        surrogate.total_weight(),
        alias,
        |i| surrogate.factor_intensity_given_diffs(model, i, from, to, &diff_from, &diff_to),
        |i| surrogate.factor_weight(i),
        rng,
    )?;
    Ok(AcceptanceOutcome {
        accepted,
        factor_evaluations: evaluations,
        poisson_draw: Some(n),
        solitary_factor_evaluated: solitary_evaluated,
    })
}

/// Truncated factorized acceptance: the Poisson path while the total
/// intensity bound stays below `truncation`, plain MH otherwise.
///
/// `truncation = 0` is always-MH; `truncation = inf` is pure subsampling.
#[allow(clippy::too_many_arguments)]
pub fn accept_tfmh<R: Rng + ?Sized>(
    model: &dyn FactorModel,
    surrogate: &TaylorSurrogate,
    alias: Option<&AliasTable>,
    from: &[f64],
    to: &[f64],
    truncation: f64,
    solitary_log_ratio: Option<f64>,
    log_q_ratio: f64,
    rng: &mut R,
) -> Result<AcceptanceOutcome> {
    let bound = surrogate.total_intensity_bound(from, to);
    if bound < truncation {
        accept_smh_poisson(model, surrogate, alias, from, to, solitary_log_ratio, rng)
    } else {
        Ok(accept_mh(model, from, to, log_q_ratio, rng))
    }
}

/// Naive Lipschitz bounds `factor_intensity(i) <= K_i * |from - to|_1` for
/// targets with bounded gradients; the baseline factorization without
/// control variates.
#[derive(Debug, Clone)]
pub struct LipschitzBounds {
    constants: Vec<f64>,
    total: f64,
}

impl LipschitzBounds {
    pub fn new(constants: Vec<f64>) -> Result<Self> {
        if constants.is_empty() {
            return Err(Error::InvalidInput("need at least one Lipschitz constant".into()));
        }
        if constants.iter().any(|k| !k.is_finite() || *k < 0.0) {
            return Err(Error::InvalidInput(
                "Lipschitz constants must be finite and nonnegative".into(),
            ));
        }
        let total = constants.iter().sum();
        Ok(Self { constants, total })
    }

    /// Per-factor gradient bounds of the model, `K_i = ubar(1, i)`.
    pub fn from_gradient_bounds(model: &dyn FactorModel) -> Result<Self> {
        Self::new(
            (0..model.factor_count())
                .map(|i| model.derivative_bound(1, i))
                .collect(),
        )
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// `|from - to|_1`, the displacement part of the naive bound.
    pub fn displacement(from: &[f64], to: &[f64]) -> f64 {
        from.iter().zip(to.iter()).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Total intensity bound `K * |from - to|_1`.
    pub fn total_intensity_bound(&self, from: &[f64], to: &[f64]) -> f64 {
        Self::displacement(from, to) * self.total
    }
}

/// Factorized acceptance for the plain likelihood factorization, using the
/// naive Lipschitz bounds with the same Poisson thinning engine.
///
/// `alias` must be built over the Lipschitz constants. There is no surrogate
/// here, so the per-factor intensity is `max(0, U_i(to) - U_i(from))`;
/// `solitary_log_ratio` carries the proposal's density ratio when it does
/// not cancel (`None` for symmetric proposals).
pub fn accept_fmh_naive<R: Rng + ?Sized>(
    model: &dyn FactorModel,
    bounds: &LipschitzBounds,
    alias: Option<&AliasTable>,
    from: &[f64],
    to: &[f64],
    solitary_log_ratio: Option<f64>,
    rng: &mut R,
) -> Result<AcceptanceOutcome> {
    let solitary_evaluated = solitary_log_ratio.is_some();
    if let Some(lr) = solitary_log_ratio {
        if !bernoulli_log(lr, rng) {
            return Ok(AcceptanceOutcome {
                accepted: false,
                factor_evaluations: 0,
                poisson_draw: None,
                solitary_factor_evaluated: true,
            });
        }
    }
    let displacement = LipschitzBounds::displacement(from, to);
    let (accepted, evaluations, n) = poisson_thinning_pass(
        displacement,
        bounds.total(),
        alias,
        |i| (model.factor_potential(i, to) - model.factor_potential(i, from)).max(0.0),
        |i| bounds.constants()[i],
        rng,
    )?;
    Ok(AcceptanceOutcome {
        accepted,
        factor_evaluations: evaluations,
        poisson_draw: Some(n),
        solitary_factor_evaluated: solitary_evaluated,
    })
}
