//! Full transition kernels and the chain runner.
//!
//! A kernel draws a proposal, runs one of the acceptance evaluators, and on
//! rejection repeats the current state (standard trace semantics, so ESS
//! estimators see the true autocorrelation). Everything is deterministic
//! given the config seed.

use crate::accept::{accept_fmh_naive, accept_mh, accept_smh_poisson, LipschitzBounds};
use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::model::FactorModel;
use crate::proposal::{GaussianProposal, ReversibleFlag};
use crate::rng::seeded_rng;
use crate::surrogate::{SurrogateOrder, TaylorSurrogate};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// Full-scan Metropolis-Hastings.
    Mh,
    /// Subsampling kernel at the given surrogate order, falling back to full
    /// MH whenever the intensity bound reaches `truncation` (`inf` disables
    /// the fallback, `0` forces always-MH).
    Smh {
        order: SurrogateOrder,
        truncation: f64,
    },
    /// Plain likelihood factorization with naive Lipschitz bounds; the
    /// baseline the control variates improve on.
    FmhNaive,
}

#[derive(Debug, Clone)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// Total iterations, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl KernelConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.iterations <= self.burn_in {
            return Err(Error::InvalidInput(
                "iterations must exceed burn_in".into(),
            ));
        }
        if self.thin == 0 {
            return Err(Error::InvalidInput("thin must be at least 1".into()));
        }
        if let KernelKind::Smh { truncation, .. } = self.kind {
            if truncation.is_nan() || truncation < 0.0 {
                return Err(Error::InvalidInput(
                    "truncation threshold must be in [0, inf]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Sampled states plus per-iteration bookkeeping.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    dim: usize,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    states: Vec<f64>, // post burn-in, thinned, row-major
    accept_flags: Vec<bool>,
    eval_counts: Vec<u64>,
    poisson_draws: Vec<Option<u64>>,
    wall: Duration,
}

impl ChainTrace {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn thin(&self) -> usize {
        self.thin
    }

    /// Number of recorded (post burn-in, thinned) states.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, idx: usize) -> &[f64] {
        &self.states[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Copy of one coordinate across the recorded states.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.state(i)[j]).collect()
    }

    /// Per-iteration flags over the whole run, burn-in included.
    pub fn accept_flags(&self) -> &[bool] {
        &self.accept_flags
    }

    pub fn eval_counts(&self) -> &[u64] {
        &self.eval_counts
    }

    pub fn poisson_draws(&self) -> &[Option<u64>] {
        &self.poisson_draws
    }

    pub fn wall_time(&self) -> Duration {
        self.wall
    }

    /// Acceptance rate over post burn-in iterations.
    pub fn mean_acceptance(&self) -> f64 {
        let post = &self.accept_flags[self.burn_in..];
        post.iter().filter(|a| **a).count() as f64 / post.len() as f64
    }

    /// Mean factor evaluations per post burn-in iteration.
    pub fn mean_evaluations(&self) -> f64 {
        let post = &self.eval_counts[self.burn_in..];
        post.iter().sum::<u64>() as f64 / post.len() as f64
    }

    /// Median factor evaluations per post burn-in iteration.
    pub fn median_evaluations(&self) -> f64 {
        let mut post: Vec<u64> = self.eval_counts[self.burn_in..].to_vec();
        post.sort_unstable();
        let mid = post.len() / 2;
        if post.len() % 2 == 0 {
            (post[mid - 1] + post[mid]) as f64 / 2.0
        } else {
            post[mid] as f64
        }
    }

    /// Mean of the recorded states, per coordinate.
    pub fn posterior_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (m, v) in mean.iter_mut().zip(self.state(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= self.len() as f64);
        mean
    }

    /// Sample variance of the recorded states, per coordinate.
    pub fn posterior_variance(&self) -> Vec<f64> {
        let mean = self.posterior_mean();
        let mut var = vec![0.0; self.dim];
        for i in 0..self.len() {
            for j in 0..self.dim {
                let dv = self.state(i)[j] - mean[j];
                var[j] += dv * dv;
            }
        }
        var.iter_mut().for_each(|v| *v /= (self.len() - 1) as f64);
        var
    }
}

fn reversible_matches(flag: ReversibleFlag, order: SurrogateOrder) -> bool {
    matches!(
        (flag, order),
        (ReversibleFlag::FirstOrder, SurrogateOrder::First)
            | (ReversibleFlag::SecondOrder, SurrogateOrder::Second)
    )
}

/// Run a MH or SMH chain.
///
/// `surrogate` is required for SMH kinds and must carry the configured
/// order. The alias table over the factor weights is built here, once.
pub fn run_chain(
    model: &dyn FactorModel,
    surrogate: Option<&TaylorSurrogate>,
    proposal: &GaussianProposal,
    config: &KernelConfig,
    initial: &[f64],
) -> Result<ChainTrace> {
    config.validate()?;
    if initial.len() != model.dim() || initial.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "initial state must be finite and match the model dimension".into(),
        ));
    }

    enum Plan<'a> {
        Mh,
        Smh {
            surrogate: &'a TaylorSurrogate,
            alias: Option<AliasTable>,
            truncation: f64,
            skip_solitary: bool,
        },
    }

    let plan = match config.kind {
        KernelKind::Mh => Plan::Mh,
        KernelKind::Smh { order, truncation } => {
            let surrogate = surrogate.ok_or_else(|| {
                Error::InvalidInput("SMH kernels need a Taylor surrogate".into())
            })?;
            if surrogate.order() != order {
                return Err(Error::InvalidInput(format!(
                    "surrogate order {:?} does not match kernel order {:?}",
                    surrogate.order(),
                    order
                )));
            }
            let alias = if surrogate.total_weight() > 0.0 {
                Some(AliasTable::new(surrogate.factor_weights())?)
            } else {
                None
            };
            Plan::Smh {
                surrogate,
                alias,
                truncation,
                skip_solitary: reversible_matches(proposal.reversible_flag(), order),
            }
        }
        KernelKind::FmhNaive => {
            return Err(Error::InvalidInput(
                "use run_naive_fmh for the naive factorized kernel".into(),
            ))
        }
    };

    let mut rng = seeded_rng(config.seed);
    let mut theta = initial.to_vec();
    let mut trace = TraceBuilder::new(model.dim(), config);
    let start = Instant::now();

    for iter in 0..config.iterations {
        let proposed = proposal.propose(&theta, &mut rng);
        let outcome = match &plan {
            Plan::Mh => accept_mh(
                model,
                &theta,
                &proposed,
                proposal.log_density_ratio(&theta, &proposed),
                &mut rng,
            ),
            Plan::Smh {
                surrogate,
                alias,
                truncation,
                skip_solitary,
            } => {
                // The bound doubles as the Poisson mean, so the truncation
                // test costs nothing extra.
                let bound = surrogate.total_intensity_bound(&theta, &proposed);
                if bound < *truncation {
                    let solitary = if *skip_solitary {
                        None
                    } else {
                        Some(
                            surrogate.log_density_ratio(&theta, &proposed)
                                + proposal.log_density_ratio(&theta, &proposed),
                        )
                    };
                    accept_smh_poisson(
                        model,
                        surrogate,
                        alias.as_ref(),
                        &theta,
                        &proposed,
                        solitary,
                        &mut rng,
                    )?
                } else {
                    accept_mh(
                        model,
                        &theta,
                        &proposed,
                        proposal.log_density_ratio(&theta, &proposed),
                        &mut rng,
                    )
                }
            }
        };
        if outcome.accepted {
            theta = proposed;
        }
        trace.record(iter, &theta, &outcome);
    }

    Ok(trace.finish(start.elapsed()))
}

/// Run the naive factorized kernel: plain likelihood factors bounded by
/// `K_i |theta - theta'|_1`, driven through the same Poisson engine.
pub fn run_naive_fmh(
    model: &dyn FactorModel,
    bounds: &LipschitzBounds,
    proposal: &GaussianProposal,
    config: &KernelConfig,
    initial: &[f64],
) -> Result<ChainTrace> {
    config.validate()?;
    if bounds.constants().len() != model.factor_count() {
        return Err(Error::InvalidInput(
            "one Lipschitz constant per factor is required".into(),
        ));
    }
    if initial.len() != model.dim() || initial.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "initial state must be finite and match the model dimension".into(),
        ));
    }
    let alias = if bounds.total() > 0.0 {
        Some(AliasTable::new(bounds.constants())?)
    } else {
        None
    };

    let mut rng = seeded_rng(config.seed);
    let mut theta = initial.to_vec();
    let mut trace = TraceBuilder::new(model.dim(), config);
    let start = Instant::now();

    for iter in 0..config.iterations {
        let proposed = proposal.propose(&theta, &mut rng);
        let solitary = if proposal.is_symmetric() {
            None
        } else {
            Some(proposal.log_density_ratio(&theta, &proposed))
        };
        let outcome = accept_fmh_naive(
            model,
            bounds,
            alias.as_ref(),
            &theta,
            &proposed,
            solitary,
            &mut rng,
        )?;
        if outcome.accepted {
            theta = proposed;
        }
        trace.record(iter, &theta, &outcome);
    }

    Ok(trace.finish(start.elapsed()))
}

struct TraceBuilder {
    dim: usize,
    iterations: usize,
    burn_in: usize,
    thin: usize,
    states: Vec<f64>,
    accept_flags: Vec<bool>,
    eval_counts: Vec<u64>,
    poisson_draws: Vec<Option<u64>>,
}

impl TraceBuilder {
    fn new(dim: usize, config: &KernelConfig) -> Self {
        let kept = (config.iterations - config.burn_in).div_ceil(config.thin);
        Self {
            dim,
            iterations: config.iterations,
            burn_in: config.burn_in,
            thin: config.thin,
            states: Vec::with_capacity(kept * dim),
            accept_flags: Vec::with_capacity(config.iterations),
            eval_counts: Vec::with_capacity(config.iterations),
            poisson_draws: Vec::with_capacity(config.iterations),
        }
    }

    #[inline]
    fn record(&mut self, iter: usize, theta: &[f64], outcome: &crate::accept::AcceptanceOutcome) {
        self.accept_flags.push(outcome.accepted);
        self.eval_counts.push(outcome.factor_evaluations);
        self.poisson_draws.push(outcome.poisson_draw);
        if iter >= self.burn_in && (iter - self.burn_in) % self.thin == 0 {
            self.states.extend_from_slice(theta);
        }
    }

    fn finish(self, wall: Duration) -> ChainTrace {
        ChainTrace {
            dim: self.dim,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            states: self.states,
            accept_flags: self.accept_flags,
            eval_counts: self.eval_counts,
            poisson_draws: self.poisson_draws,
            wall,
        }
    }
}
