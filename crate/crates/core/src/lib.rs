//! Exact-subsampling Metropolis-Hastings kernels for factorized Bayesian targets.
//!
//! The library implements a family of reversible MCMC kernels whose invariant
//! distribution is the exact posterior, while the per-iteration cost stays
//! sublinear in the number of likelihood factors:
//!
//! * **MH** — textbook Metropolis-Hastings, evaluating every factor.
//! * **FMH** — factorized acceptance simulated as a cascade of per-factor
//!   Bernoulli trials with early rejection.
//! * **SMH-k** — factorized acceptance over control-variate factors
//!   `likelihood_i / taylor_i`, simulated by Poisson thinning with an alias
//!   table, so the expected number of factor evaluations per iteration is
//!   `O(1)` for first-order surrogates and `O(1/sqrt(n))` for second-order.
//! * **TFMH** — any of the above truncated back to full MH whenever the
//!   intensity bound crosses a threshold `R`.
//!
//! The crate ships two concrete targets (Bayesian logistic regression and
//! Student-t robust linear regression), a mode finder that produces the
//! Taylor expansion point, the Gaussian proposal family (random walk,
//! preconditioned random walk, surrogate-reversible and pCN variants), and
//! chain diagnostics (effective sample size, batch-means errors, quadrature
//! moments for low-dimensional ground truth, scaling studies).

pub mod accept;
pub mod alias;
pub mod diagnostics;
pub mod error;
mod kahan;
pub mod kernel;
pub mod mode;
pub mod model;
pub mod poisson;
pub mod proposal;
pub mod rng;
pub mod surrogate;

pub use accept::{
    accept_fmh_cascade, accept_fmh_naive, accept_mh, accept_smh_poisson, accept_tfmh,
    AcceptanceOutcome, LipschitzBounds,
};
pub use alias::AliasTable;
pub use diagnostics::{
    batch_means, ess, quadrature_posterior_moments, rho_study, scaling_study, summarize,
    ChainSummary, GridSpec, KernelSeries, PosteriorMoments, RhoCell, RhoStudyConfig,
    RhoStudyResult, ScalingStudyConfig, ScalingStudyResult, StudyKernel, Truncation,
};
pub use error::{Error, Result};
pub use kernel::{run_chain, run_naive_fmh, ChainTrace, KernelConfig, KernelKind};
pub use mode::{find_mode, ModeConfig, ModeResult};
pub use model::{
    build_logistic_model, build_robust_regression_model, generate_synthetic, load_csv,
    AugmentedModel, Dataset, FactorModel, GaussianTarget, LogisticRegression, ModelKind,
    RobustLinearRegression, UserFactor,
};
pub use proposal::{make_proposal, GaussianProposal, ProposalKind, ReversibleFlag};
pub use surrogate::{SurrogateOrder, TaylorSurrogate};
