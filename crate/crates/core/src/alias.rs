//! Walker alias table: O(1) sampling from a fixed discrete distribution.
//!
//! Built once per run over the static per-factor weights, then sampled every
//! iteration. Uses the two-uniform variant (one uniform picks the column, one
//! flips the biased coin), which stays unbiased with 64-bit generators.

use crate::error::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
    weights: Vec<f64>, // normalized input weights, kept for reconstruction
}

impl AliasTable {
    /// Build the table from nonnegative weights in Theta(m) time.
    ///
    /// Zero weights are allowed and are never sampled; an all-zero (or empty)
    /// weight vector has no distribution to sample and is rejected.
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("alias table needs at least one weight".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "alias weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("alias weights sum to zero".into()));
        }

        let m = weights.len();
        let normalized: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut scaled: Vec<f64> = normalized.iter().map(|p| p * m as f64).collect();
        let mut prob = vec![1.0f64; m];
        let mut alias: Vec<usize> = (0..m).collect();

        let mut small: Vec<usize> = Vec::with_capacity(m);
        let mut large: Vec<usize> = Vec::with_capacity(m);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }

        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            large.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            // Transfer exactly the deficit; this grouping keeps the running
            // column sums consistent to the last bit.
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        // Whatever remains on either stack is within rounding of 1.
        for &i in small.iter().chain(large.iter()) {
            prob[i] = 1.0;
            alias[i] = i;
        }

        Ok(Self {
            prob,
            alias,
            weights: normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// Draw one index, distributed per the normalized input weights.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let column = rng.random_range(0..self.prob.len());
        let coin: f64 = rng.random();
        if coin < self.prob[column] {
            column
        } else {
            self.alias[column]
        }
    }

    /// Normalized weight of index `i` as the table represents it:
    /// `(prob[i] + sum over columns aliased to i of (1 - prob)) / m`.
    pub fn reconstructed_probability(&self, i: usize) -> f64 {
        let mut p = self.prob[i];
        for (j, &a) in self.alias.iter().enumerate() {
            if a == i && j != i {
                p += 1.0 - self.prob[j];
            }
        }
        p / self.prob.len() as f64
    }

    /// The normalized input weights (target distribution of `sample`).
    pub fn probabilities(&self) -> &[f64] {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derived_rng, Stream};
    use proptest::prelude::*;

    #[test]
    fn single_weight_always_returns_zero() {
        let table = AliasTable::new(&[2.5]).unwrap();
        let mut rng = derived_rng(0, Stream::Test, 10);
        for _ in 0..100 {
            assert_eq!(table.sample(&mut rng), 0);
        }
        assert!((table.reconstructed_probability(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_weights_reconstruct_exactly() {
        let table = AliasTable::new(&[1.0, 3.0]).unwrap();
        assert!((table.reconstructed_probability(0) - 0.25).abs() < 1e-15);
        assert!((table.reconstructed_probability(1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_never_sampled() {
        let table = AliasTable::new(&[0.0, 1.0, 0.0, 2.0]).unwrap();
        let mut rng = derived_rng(1, Stream::Test, 11);
        for _ in 0..10_000 {
            let idx = table.sample(&mut rng);
            assert!(idx == 1 || idx == 3);
        }
    }

    #[test]
    fn all_zero_weights_rejected() {
        assert!(AliasTable::new(&[0.0, 0.0]).is_err());
        assert!(AliasTable::new(&[]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let table = AliasTable::new(&[0.2, 0.3, 0.5]).unwrap();
        let seq = |seed| {
            let mut rng = derived_rng(seed, Stream::Test, 12);
            (0..32).map(|_| table.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(seq(3), seq(3));
    }

    #[test]
    fn chi_square_goodness_of_fit() {
        let weights = [0.2, 0.3, 0.5];
        let table = AliasTable::new(&weights).unwrap();
        let draws = 1_000_000usize;
        let mut counts = [0u64; 3];
        let mut rng = derived_rng(9, Stream::Test, 13);
        for _ in 0..draws {
            counts[table.sample(&mut rng)] += 1;
        }
        let mut chi2 = 0.0;
        for (c, w) in counts.iter().zip(weights.iter()) {
            let expected = w * draws as f64;
            let diff = *c as f64 - expected;
            chi2 += diff * diff / expected;
        }
        // df = 2; 99.9% critical value 13.82.
        assert!(chi2 < 13.82, "chi2 = {chi2}");
    }

    proptest! {
        /// Reconstruction from the table rows equals the normalized weights.
        #[test]
        fn reconstruction_identity(weights in proptest::collection::vec(0.0f64..100.0, 1..200)) {
            prop_assume!(weights.iter().sum::<f64>() > 1e-6);
            let table = AliasTable::new(&weights).unwrap();
            let total: f64 = weights.iter().sum();
            for (i, w) in weights.iter().enumerate() {
                let expected = w / total;
                prop_assert!((table.reconstructed_probability(i) - expected).abs() < 1e-12);
            }
        }
    }
}
