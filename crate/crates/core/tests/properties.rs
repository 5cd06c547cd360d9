//! Cross-module properties of the factorized acceptance machinery on the
//! built-in models.

use rand::Rng;
use rand_distr::StandardNormal;
use smh_core::model::FactorModel;
use smh_core::rng::{derived_rng, Stream};
use smh_core::{
    accept_smh_poisson, build_logistic_model, build_robust_regression_model, find_mode,
    generate_synthetic, AliasTable, ModeConfig, ModelKind, SurrogateOrder, TaylorSurrogate,
};

enum Built {
    Logistic(smh_core::LogisticRegression),
    Robust(smh_core::RobustLinearRegression),
}

impl Built {
    fn as_dyn(&self) -> &dyn FactorModel {
        match self {
            Built::Logistic(m) => m,
            Built::Robust(m) => m,
        }
    }
}

fn fixtures(n: usize, d: usize, seed: u64) -> Vec<(Built, Vec<f64>)> {
    let mut out = Vec::new();
    for kind in [
        ModelKind::LogisticRegression,
        ModelKind::RobustLinearRegression { nu: 4.0 },
    ] {
        let data = generate_synthetic(n, d, kind, seed).unwrap();
        let built = match kind {
            ModelKind::LogisticRegression => Built::Logistic(build_logistic_model(data).unwrap()),
            ModelKind::RobustLinearRegression { nu } => {
                Built::Robust(build_robust_regression_model(data, nu).unwrap())
            }
        };
        let mut rng = derived_rng(seed, Stream::ModeFinder, 7);
        let mode = find_mode(built.as_dyn(), &ModeConfig::default(), &mut rng).unwrap();
        out.push((built, mode.theta_hat));
    }
    out
}

/// The factorized acceptance probability never exceeds the plain MH one
/// (each extra min-term can only shrink the product).
#[test]
fn factorized_acceptance_is_dominated_by_mh() {
    for (built, theta_hat) in fixtures(50, 3, 314) {
        let model = built.as_dyn();
        for order in [SurrogateOrder::First, SurrogateOrder::Second] {
            let surrogate = TaylorSurrogate::build(model, &theta_hat, order).unwrap();
            let mut rng = derived_rng(315, Stream::Test, order.k() as u64);
            for _ in 0..1000 {
                let a: Vec<f64> = theta_hat
                    .iter()
                    .map(|c| c + rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let b: Vec<f64> = theta_hat
                    .iter()
                    .map(|c| c + rng.sample::<f64, _>(StandardNormal))
                    .collect();
                // Symmetric proposal: the q terms cancel on both sides.
                let mut log_smh = (surrogate.total_potential(&a)
                    - surrogate.total_potential(&b))
                .min(0.0);
                for i in 0..model.factor_count() {
                    log_smh -= surrogate.factor_intensity(model, i, &a, &b);
                }
                let log_mh =
                    (model.total_potential(&a) - model.total_potential(&b)).min(0.0);
                assert!(
                    log_smh <= log_mh + 1e-9,
                    "dominance violated: {log_smh} > {log_mh}"
                );
            }
        }
    }
}

/// The runtime intensity/bound check in the Poisson engine never trips on
/// the built-in models: one million engine invocations on posterior-scale
/// pairs.
#[test]
fn bound_check_never_fires_on_builtin_models() {
    for (built, theta_hat) in fixtures(200, 5, 271) {
        let model = built.as_dyn();
        let spread = 1.0 / (model.factor_count() as f64).sqrt();
        for order in [SurrogateOrder::First, SurrogateOrder::Second] {
            let surrogate = TaylorSurrogate::build(model, &theta_hat, order).unwrap();
            let alias = AliasTable::new(surrogate.factor_weights()).unwrap();
            let mut rng = derived_rng(272, Stream::Test, order.k() as u64);
            for _ in 0..250_000 {
                let a: Vec<f64> = theta_hat
                    .iter()
                    .map(|c| c + 3.0 * spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let b: Vec<f64> = theta_hat
                    .iter()
                    .map(|c| c + 3.0 * spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                accept_smh_poisson(model, &surrogate, Some(&alias), &a, &b, None, &mut rng)
                    .expect("intensity bound violated");
            }
        }
    }
}
