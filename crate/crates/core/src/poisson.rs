//! Poisson sampling tuned for the intensity range the kernels produce.
//!
//! The Poisson mean here is an intensity bound that can sit anywhere between
//! 0 (both states at the expansion point) and `O(sqrt(n))` (naive Lipschitz
//! bounds on large data). Product-of-uniforms inversion is cheapest for small
//! means; above `INVERSION_CUTOFF` we switch to Hormann's transformed
//! rejection with squeeze (PTRS), which draws in O(1) regardless of the mean.

use rand::Rng;

const INVERSION_CUTOFF: f64 = 30.0;

/// Draw one Poisson variate with the given mean.
///
/// `mean` must be finite and nonnegative; a mean of zero returns zero.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    assert!(mean.is_finite() && mean >= 0.0, "Poisson mean must be finite and >= 0");
    if mean == 0.0 {
        0
    } else if mean < INVERSION_CUTOFF {
        sample_inversion(mean, rng)
    } else {
        sample_ptrs(mean, rng)
    }
}

fn sample_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let limit = (-mean).exp();
    let mut k = 0u64;
    let mut prod: f64 = rng.random();
    while prod > limit {
        k += 1;
        prod *= rng.random::<f64>();
    }
    k
}

// Transformed rejection with squeeze (PTRS). Valid for mean >= 10.
fn sample_ptrs<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);

    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln()
            <= -mean + k * loglam - ln_gamma(k + 1.0)
        {
            return k as u64;
        }
    }
}

// Lanczos approximation (g = 7, 9 terms), accurate to ~15 digits for x >= 1.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    debug_assert!(x >= 1.0);
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derived_rng, Stream};

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut lf = 0.0;
        for k in 1..50u64 {
            lf += (k as f64).ln();
            assert!((ln_gamma(k as f64 + 1.0) - lf).abs() < 1e-10 * lf.max(1.0));
        }
    }

    #[test]
    fn zero_mean_returns_zero() {
        let mut rng = derived_rng(0, Stream::Test, 0);
        for _ in 0..100 {
            assert_eq!(sample_poisson(0.0, &mut rng), 0);
        }
    }

    #[test]
    fn moments_match_across_regimes() {
        let mut rng = derived_rng(42, Stream::Test, 1);
        for &mean in &[0.3, 3.0, 12.0, 29.9, 35.0, 300.0, 3000.0] {
            let trials = 200_000usize;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..trials {
                let k = sample_poisson(mean, &mut rng) as f64;
                sum += k;
                sum_sq += k * k;
            }
            let emp_mean = sum / trials as f64;
            let emp_var = sum_sq / trials as f64 - emp_mean * emp_mean;
            // Mean of a Poisson sample: sd = sqrt(mean/trials).
            let mean_tol = 4.0 * (mean / trials as f64).sqrt();
            assert!(
                (emp_mean - mean).abs() < mean_tol,
                "mean {mean}: got {emp_mean}"
            );
            // Var of the variance estimator ~ (2*mean^2 + mean)/trials.
            let var_tol = 4.0 * ((2.0 * mean * mean + mean) / trials as f64).sqrt();
            assert!(
                (emp_var - mean).abs() < var_tol,
                "mean {mean}: var {emp_var}"
            );
        }
    }

    /// PTRS distribution check against the exact pmf, just above the cutoff.
    #[test]
    fn ptrs_pmf_chi_square() {
        let mean = 35.0;
        let trials = 500_000usize;
        let mut rng = derived_rng(7, Stream::Test, 2);
        let lo = 10usize;
        let hi = 65usize;
        let mut counts = vec![0u64; hi - lo + 2]; // [lo, hi] plus an overflow bin
        for _ in 0..trials {
            let k = sample_poisson(mean, &mut rng) as usize;
            let idx = if k < lo {
                counts.len() - 1
            } else if k > hi {
                counts.len() - 1
            } else {
                k - lo
            };
            counts[idx] += 1;
        }
        // Exact pmf by recursion.
        let mut pmf = vec![0.0f64; hi + 1];
        pmf[0] = (-mean).exp();
        for k in 1..=hi {
            pmf[k] = pmf[k - 1] * mean / k as f64;
        }
        let mut chi2 = 0.0;
        let mut tail = 1.0;
        for k in lo..=hi {
            let expected = pmf[k] * trials as f64;
            tail -= pmf[k];
            let diff = counts[k - lo] as f64 - expected;
            chi2 += diff * diff / expected;
        }
        let expected_tail = tail * trials as f64;
        let diff = counts[counts.len() - 1] as f64 - expected_tail;
        chi2 += diff * diff / expected_tail;
        // 57 bins -> df = 56; 99.9% critical value ~ 102.2.
        assert!(chi2 < 102.2, "chi2 = {chi2}");
    }
}
