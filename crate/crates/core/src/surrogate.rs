//! Taylor surrogates around an expansion point near the mode.
//!
//! For order `k` in {1, 2} the surrogate of factor `i` is
//!
//! ```text
//! taylor_1_i(theta) = U_i(c) + grad U_i(c) . (theta - c)
//! taylor_2_i(theta) = taylor_1_i(theta) + (theta - c)' Hess U_i(c) (theta - c) / 2
//! ```
//!
//! with `c` the expansion point. Additivity gives the aggregate surrogate in
//! O(d) (first order) or O(d^2) (second order) per evaluation, never O(m).
//! The remainder `U_i - taylor_k_i` obeys
//!
//! ```text
//! |U_i(theta) - taylor_k_i(theta)| <= factor_weight(i) * |theta - c|_1^(k+1)
//! ```
//!
//! where `factor_weight(i) = ubar(k+1, i) / (k+1)!`. That inequality is what
//! turns the per-factor rejection intensities into a separable, precomputable
//! bound: `factor_intensity(i) <= displacement_factor(theta, theta') *
//! factor_weight(i)`.

use crate::error::{Error, Result};
use crate::kahan::{KahanSum, KahanVec};
use crate::model::FactorModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateOrder {
    First,
    Second,
}

impl SurrogateOrder {
    pub fn k(self) -> usize {
        match self {
            SurrogateOrder::First => 1,
            SurrogateOrder::Second => 2,
        }
    }

    /// `(k+1)!`, the denominator of the remainder weights.
    fn remainder_factorial(self) -> f64 {
        match self {
            SurrogateOrder::First => 2.0,
            SurrogateOrder::Second => 6.0,
        }
    }
}

/// Precomputed Taylor data: everything the per-iteration acceptance path
/// needs so that it never has to touch all `m` factors.
#[derive(Debug, Clone)]
pub struct TaylorSurrogate {
    order: SurrogateOrder,
    center: Vec<f64>,
    dim: usize,
    factor_count: usize,
    factor_values: Vec<f64>,           // U_i(c), length m
    factor_grads: Vec<f64>,            // m x d, row-major
    factor_hessians: Option<Vec<f64>>, // m x d x d, second order only
    total_value: f64,                  // U(c)
    total_grad: Vec<f64>,              // sum of factor gradients
    total_hessian: Vec<f64>,           // sum of factor Hessians, d x d
    factor_weights: Vec<f64>,          // ubar(k+1, i) / (k+1)!
    total_weight: f64,                 // sum of factor weights
}

impl TaylorSurrogate {
    /// One pass over all factors of `model`, expanding around `center`.
    ///
    /// The aggregate Hessian is assembled for either order (the proposal
    /// family needs it); per-factor Hessians are stored only for the second
    /// order, costing O(m d^2) memory on top of the O(m d) gradients.
    pub fn build(model: &dyn FactorModel, center: &[f64], order: SurrogateOrder) -> Result<Self> {
        let d = model.dim();
        let m = model.factor_count();
        if center.len() != d {
            return Err(Error::InvalidInput(format!(
                "expansion point has dimension {}, model has {}",
                center.len(),
                d
            )));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("expansion point must be finite".into()));
        }

        let mut factor_values = Vec::with_capacity(m);
        let mut factor_grads = vec![0.0; m * d];
        let mut factor_hessians = match order {
            SurrogateOrder::Second => Some(vec![0.0; m * d * d]),
            SurrogateOrder::First => None,
        };
        let mut factor_weights = Vec::with_capacity(m);

        let mut value_acc = KahanSum::new();
        let mut grad_acc = KahanVec::zeros(d);
        let mut hess_acc = KahanVec::zeros(d * d);
        let mut weight_acc = KahanSum::new();
        let mut hess_buf = vec![0.0; d * d];

        for i in 0..m {
            let value = model.factor_potential(i, center);
            let grad = &mut factor_grads[i * d..(i + 1) * d];
            model.factor_gradient(i, center, grad);
            model.factor_hessian(i, center, &mut hess_buf);
            if !value.is_finite()
                || grad.iter().any(|v| !v.is_finite())
                || hess_buf.iter().any(|v| !v.is_finite())
            {
                return Err(Error::Numeric(format!(
                    "factor {i} has a non-finite value or derivative at the expansion point"
                )));
            }
            value_acc.add(value);
            grad_acc.add_slice(grad);
            hess_acc.add_slice(&hess_buf);
            if let Some(store) = factor_hessians.as_mut() {
                store[i * d * d..(i + 1) * d * d].copy_from_slice(&hess_buf);
            }

            let weight = model.derivative_bound(order.k() + 1, i) / order.remainder_factorial();
            if !(weight >= 0.0) || !weight.is_finite() {
                return Err(Error::Numeric(format!(
                    "factor {i} has an invalid derivative bound for order {}",
                    order.k() + 1
                )));
            }
            factor_values.push(value);
            factor_weights.push(weight);
            weight_acc.add(weight);
        }

        Ok(Self {
            order,
            center: center.to_vec(),
            dim: d,
            factor_count: m,
            factor_values,
            factor_grads,
            factor_hessians,
            total_value: value_acc.value(),
            total_grad: grad_acc.into_value(),
            total_hessian: hess_acc.into_value(),
            factor_weights,
            total_weight: weight_acc.value(),
        })
    }

    pub fn order(&self) -> SurrogateOrder {
        self.order
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factor_count(&self) -> usize {
        self.factor_count
    }

    /// `U(c)` at the expansion point.
    pub fn value_at_center(&self) -> f64 {
        self.total_value
    }

    /// Aggregate gradient at the expansion point.
    pub fn total_gradient(&self) -> &[f64] {
        &self.total_grad
    }

    /// Aggregate Hessian at the expansion point (row-major d x d).
    pub fn total_hessian(&self) -> &[f64] {
        &self.total_hessian
    }

    /// `factor_weight(i)`: the static part of factor `i`'s intensity bound.
    pub fn factor_weight(&self, i: usize) -> f64 {
        self.factor_weights[i]
    }

    pub fn factor_weights(&self) -> &[f64] {
        &self.factor_weights
    }

    /// Sum of all factor weights.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub(crate) fn diff_from_center(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.center.iter())
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Surrogate potential of factor `i`, given `diff = theta - center`.
    #[inline]
    pub(crate) fn factor_potential_given_diff(&self, i: usize, diff: &[f64]) -> f64 {
        let d = self.dim;
        let grad = &self.factor_grads[i * d..(i + 1) * d];
        let mut value = self.factor_values[i];
        for (g, dx) in grad.iter().zip(diff.iter()) {
            value += g * dx;
        }
        if let Some(hessians) = &self.factor_hessians {
            let h = &hessians[i * d * d..(i + 1) * d * d];
            value += 0.5 * quadratic_form(h, diff);
        }
        value
    }

    /// `taylor_k_i(theta)`.
    pub fn factor_potential(&self, i: usize, theta: &[f64]) -> f64 {
        self.factor_potential_given_diff(i, &self.diff_from_center(theta))
    }

    /// Aggregate surrogate potential `taylor_k(theta)`; O(d) for first order,
    /// O(d^2) for second.
    pub fn total_potential(&self, theta: &[f64]) -> f64 {
        let diff = self.diff_from_center(theta);
        let mut value = self.total_value;
        for (g, dx) in self.total_grad.iter().zip(diff.iter()) {
            value += g * dx;
        }
        if self.order == SurrogateOrder::Second {
            value += 0.5 * quadratic_form(&self.total_hessian, &diff);
        }
        value
    }

    /// Log ratio of the aggregate surrogate densities,
    /// `log pi_hat(to) - log pi_hat(from) = taylor_k(from) - taylor_k(to)`.
    pub fn log_density_ratio(&self, from: &[f64], to: &[f64]) -> f64 {
        self.total_potential(from) - self.total_potential(to)
    }

    /// The state-dependent part of the intensity bound:
    /// `|theta - c|_1^(k+1) + |theta' - c|_1^(k+1)`.
    ///
    /// Symmetric by construction and zero only when both states sit at the
    /// expansion point.
    pub fn displacement_factor(&self, theta: &[f64], other: &[f64]) -> f64 {
        self.displacement_term(theta) + self.displacement_term(other)
    }

    /// One-sided displacement `|theta - c|_1^(k+1)`.
    pub fn displacement_term(&self, theta: &[f64]) -> f64 {
        let l1: f64 = theta
            .iter()
            .zip(self.center.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        l1.powi(self.order.k() as i32 + 1)
    }

    /// Total intensity bound `displacement_factor * total_weight`; the
    /// Poisson mean of the thinning pass.
    pub fn total_intensity_bound(&self, theta: &[f64], other: &[f64]) -> f64 {
        self.displacement_factor(theta, other) * self.total_weight
    }

    /// Per-factor intensity bound `displacement_factor * factor_weight(i)`.
    pub fn factor_intensity_bound(&self, i: usize, theta: &[f64], other: &[f64]) -> f64 {
        self.displacement_factor(theta, other) * self.factor_weights[i]
    }

    /// Exact per-factor rejection intensity
    /// `max(0, [U_i(to) - taylor_i(to)] - [U_i(from) - taylor_i(from)])`,
    /// i.e. the negative log of factor `i`'s acceptance ratio.
    pub fn factor_intensity(
        &self,
        model: &dyn FactorModel,
        i: usize,
        from: &[f64],
        to: &[f64],
    ) -> f64 {
        let diff_from = self.diff_from_center(from);
        let diff_to = self.diff_from_center(to);
        self.factor_intensity_given_diffs(model, i, from, to, &diff_from, &diff_to)
    }

    #[inline]
    pub(crate) fn factor_intensity_given_diffs(
        &self,
        model: &dyn FactorModel,
        i: usize,
        from: &[f64],
        to: &[f64],
        diff_from: &[f64],
        diff_to: &[f64],
    ) -> f64 {
        let residual_to = model.factor_potential(i, to) - self.factor_potential_given_diff(i, diff_to);
        let residual_from =
            model.factor_potential(i, from) - self.factor_potential_given_diff(i, diff_from);
        (residual_to - residual_from).max(0.0)
    }
}

#[inline]
fn quadratic_form(h: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for j in 0..d {
        let row = &h[j * d..(j + 1) * d];
        let mut inner = 0.0;
        for (hk, xk) in row.iter().zip(x.iter()) {
            inner += hk * xk;
        }
        acc += x[j] * inner;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_logistic_model, generate_synthetic, AugmentedModel, GaussianTarget, ModelKind,
        UserFactor,
    };
    use crate::rng::{derived_rng, Stream};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn logistic_fixture(n: usize, d: usize, seed: u64) -> crate::model::LogisticRegression {
        let data = generate_synthetic(n, d, ModelKind::LogisticRegression, seed).unwrap();
        build_logistic_model(data).unwrap()
    }

    #[test]
    fn quadratic_target_is_reproduced_exactly_at_second_order() {
        let target = GaussianTarget::new(vec![1.0, -2.0], vec![2.0, 0.5], 4).unwrap();
        let center = vec![0.3, 0.7];
        let s = TaylorSurrogate::build(&target, &center, SurrogateOrder::Second).unwrap();
        assert_eq!(s.total_weight(), 0.0);
        let mut rng = derived_rng(1, Stream::Test, 20);
        for _ in 0..50 {
            let theta: Vec<f64> = (0..2)
                .map(|_| 5.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            for i in 0..4 {
                assert_relative_eq!(
                    s.factor_potential(i, &theta),
                    target.factor_potential(i, &theta),
                    max_relative = 1e-12,
                    epsilon = 1e-12
                );
                assert!(s.factor_intensity(&target, i, &center, &theta) < 1e-12);
            }
            assert_relative_eq!(
                s.total_potential(&theta),
                target.total_potential(&theta),
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn surrogate_matches_potential_at_center() {
        let model = logistic_fixture(30, 3, 41);
        let center = vec![0.2, -0.1, 0.4];
        for order in [SurrogateOrder::First, SurrogateOrder::Second] {
            let s = TaylorSurrogate::build(&model, &center, order).unwrap();
            assert_relative_eq!(
                s.total_potential(&center),
                model.total_potential(&center),
                max_relative = 1e-12
            );
            for i in 0..model.factor_count() {
                assert_relative_eq!(
                    s.factor_potential(i, &center),
                    model.factor_potential(i, &center),
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn first_order_surrogate_is_affine_along_lines() {
        let model = logistic_fixture(10, 2, 42);
        let s = TaylorSurrogate::build(&model, &[0.1, 0.2], SurrogateOrder::First).unwrap();
        let base = [0.5, -1.0];
        let dir = [1.3, 0.4];
        let at = |t: f64| {
            let theta = [base[0] + t * dir[0], base[1] + t * dir[1]];
            s.factor_potential(3, &theta)
        };
        let second_diff = at(1.0) - 2.0 * at(0.0) + at(-1.0);
        assert!(second_diff.abs() < 1e-10);
    }

    #[test]
    fn second_order_total_is_quadratic_along_lines() {
        let model = logistic_fixture(40, 3, 43);
        let s = TaylorSurrogate::build(&model, &[0.0, 0.0, 0.0], SurrogateOrder::Second).unwrap();
        let mut rng = derived_rng(2, Stream::Test, 21);
        for _ in 0..10 {
            let base: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let dir: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let at = |t: f64| {
                let theta: Vec<f64> =
                    base.iter().zip(dir.iter()).map(|(b, v)| b + t * v).collect();
                s.total_potential(&theta)
            };
            // Third central difference of a quadratic vanishes.
            let third = at(2.0) - 3.0 * at(1.0) + 3.0 * at(0.0) - at(-1.0);
            assert!(third.abs() < 1e-7, "third difference {third}");
        }
    }

    #[test]
    fn total_weight_matches_direct_summation() {
        let model = logistic_fixture(100, 2, 44);
        let center = vec![0.05, -0.3];
        let s = TaylorSurrogate::build(&model, &center, SurrogateOrder::First).unwrap();
        // weight_i = ubar(2, i)/2 = max|x_ij|^2 / 8 for the logistic model.
        let mut brute = 0.0;
        for i in 0..model.factor_count() {
            let mx = model
                .data()
                .row(i)
                .iter()
                .fold(0.0f64, |m, x| m.max(x.abs()));
            brute += 0.25 * mx * mx / 2.0;
        }
        assert_relative_eq!(s.total_weight(), brute, max_relative = 1e-12);
    }

    #[test]
    fn total_potential_matches_factor_sum() {
        let model = logistic_fixture(50, 3, 45);
        let center = vec![0.4, 0.1, -0.2];
        let mut rng = derived_rng(3, Stream::Test, 22);
        for order in [SurrogateOrder::First, SurrogateOrder::Second] {
            let s = TaylorSurrogate::build(&model, &center, order).unwrap();
            for _ in 0..20 {
                let theta: Vec<f64> =
                    (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let total = s.total_potential(&theta);
                let summed: f64 = (0..model.factor_count())
                    .map(|i| s.factor_potential(i, &theta))
                    .sum();
                assert_relative_eq!(total, summed, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn displacement_factor_formula() {
        let model = logistic_fixture(5, 1, 46);
        let s = TaylorSurrogate::build(&model, &[0.0], SurrogateOrder::First).unwrap();
        assert_relative_eq!(s.displacement_factor(&[1.0], &[2.0]), 5.0);
        assert_eq!(s.displacement_factor(&[0.0], &[0.0]), 0.0);
        let s2 = TaylorSurrogate::build(&model, &[0.0], SurrogateOrder::Second).unwrap();
        assert_relative_eq!(s2.displacement_factor(&[1.0], &[2.0]), 9.0);
    }

    #[test]
    fn remainder_bound_holds_everywhere_probed() {
        let model = logistic_fixture(20, 2, 47);
        let center = vec![0.2, -0.4];
        let mut rng = derived_rng(4, Stream::Test, 23);
        for order in [SurrogateOrder::First, SurrogateOrder::Second] {
            let s = TaylorSurrogate::build(&model, &center, order).unwrap();
            for _ in 0..2000 {
                let theta: Vec<f64> = (0..2)
                    .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let disp = s.displacement_term(&theta);
                for i in 0..model.factor_count() {
                    let remainder =
                        (model.factor_potential(i, &theta) - s.factor_potential(i, &theta)).abs();
                    assert!(
                        remainder <= s.factor_weight(i) * disp * (1.0 + 1e-9) + 1e-12,
                        "remainder {remainder} vs bound {}",
                        s.factor_weight(i) * disp
                    );
                }
            }
        }
    }

    #[test]
    fn intensity_bound_dominates_exact_intensity() {
        let model = logistic_fixture(20, 2, 48);
        let center = vec![0.0, 0.1];
        let mut rng = derived_rng(5, Stream::Test, 24);
        for order in [SurrogateOrder::First, SurrogateOrder::Second] {
            let s = TaylorSurrogate::build(&model, &center, order).unwrap();
            for _ in 0..1000 {
                let a: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let b: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let mut exact_total = 0.0;
                for i in 0..model.factor_count() {
                    let exact = s.factor_intensity(&model, i, &a, &b);
                    let bound = s.factor_intensity_bound(i, &a, &b);
                    assert!(exact <= bound * (1.0 + 1e-9) + 1e-12);
                    exact_total += exact;
                }
                assert!(exact_total <= s.total_intensity_bound(&a, &b) * (1.0 + 1e-9) + 1e-12);
            }
        }
    }

    #[test]
    fn intensity_is_zero_for_identical_states() {
        let model = logistic_fixture(10, 2, 49);
        let s = TaylorSurrogate::build(&model, &[0.3, 0.3], SurrogateOrder::First).unwrap();
        let theta = [1.0, -2.0];
        for i in 0..model.factor_count() {
            assert_eq!(s.factor_intensity(&model, i, &theta, &theta), 0.0);
        }
    }

    #[test]
    fn non_finite_derivative_is_reported_with_factor_index() {
        let base = logistic_fixture(3, 2, 50);
        let bad = UserFactor {
            potential: Box::new(|_: &[f64]| f64::NAN),
            gradient: Box::new(|_: &[f64], out: &mut [f64]| out.fill(0.0)),
            hessian: Box::new(|_: &[f64], out: &mut [f64]| out.fill(0.0)),
            derivative_bounds: [0.0, 0.0, 0.0],
        };
        let model = AugmentedModel::new(base, vec![bad]);
        let err = TaylorSurrogate::build(&model, &[0.0, 0.0], SurrogateOrder::First).unwrap_err();
        assert!(err.to_string().contains("factor 3"), "{err}");
    }

    proptest! {
        #[test]
        fn displacement_is_symmetric_and_nonnegative(
            a in proptest::collection::vec(-50.0f64..50.0, 3),
            b in proptest::collection::vec(-50.0f64..50.0, 3),
        ) {
            let model = logistic_fixture(4, 3, 51);
            let s = TaylorSurrogate::build(&model, &[0.1, 0.2, 0.3], SurrogateOrder::First).unwrap();
            let ab = s.displacement_factor(&a, &b);
            let ba = s.displacement_factor(&b, &a);
            prop_assert_eq!(ab, ba);
            prop_assert!(ab >= 0.0);
        }
    }
}
