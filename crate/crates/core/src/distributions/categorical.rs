use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::argmax;

/// Additive pseudo-count applied to every categorical M-step.
pub const SMOOTHING: f64 = 1e-6;

const NORMALIZATION_TOL: f64 = 1e-9;

/// Distribution over a finite vocabulary `0..len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CategoricalDist {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl CategoricalDist {
    /// Builds from probabilities that already sum to one (within 1e-9).
    /// Hard zeros are allowed here; only fitted distributions are smoothed.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParameter("categorical over empty vocabulary".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidParameter(
                "categorical probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidParameter(format!(
                "categorical probabilities sum to {total}, expected 1"
            )));
        }
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Ok(Self { probs, log_probs })
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroWeight);
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0, "categorical over empty vocabulary");
        let p = 1.0 / len as f64;
        Self {
            probs: vec![p; len],
            log_probs: vec![p.ln(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    #[inline]
    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Log-probability of item `i`, checking the id against the vocabulary.
    #[inline]
    pub fn log_prob(&self, i: usize) -> Result<f64> {
        self.log_probs.get(i).copied().ok_or(Error::UnknownToken {
            id: i,
            vocab_size: self.len(),
        })
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut last_positive = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > 0.0 {
                last_positive = i;
                cumulative += p;
                if u < cumulative {
                    return i;
                }
            }
        }
        last_positive
    }

    /// Returns a copy with entries reordered so that entry `i` is the old
    /// entry `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            probs: order.iter().map(|&i| self.probs[i]).collect(),
            log_probs: order.iter().map(|&i| self.log_probs[i]).collect(),
        }
    }
}

impl TryFrom<Vec<f64>> for CategoricalDist {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<CategoricalDist> for Vec<f64> {
    fn from(d: CategoricalDist) -> Self {
        d.probs
    }
}

/// Weighted item counts.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalStats {
    counts: Vec<f64>,
}

impl CategoricalStats {
    pub fn new(len: usize) -> Self {
        Self {
            counts: vec![0.0; len],
        }
    }

    #[inline]
    pub fn add(&mut self, item: usize, weight: f64) {
        self.counts[item] += weight;
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// `(count + ε) / (total + ε·V)`.
    pub fn fit(&self) -> Result<CategoricalDist> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::ZeroWeight);
        }
        let denom = total + SMOOTHING * self.counts.len() as f64;
        let probs = self.counts.iter().map(|c| (c + SMOOTHING) / denom).collect();
        CategoricalDist::new(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_for, Domain};

    #[test]
    fn counts_ratio_in_small_smoothing_limit() {
        let mut s = CategoricalStats::new(2);
        s.add(0, 3.0);
        s.add(1, 1.0);
        let d = s.fit().unwrap();
        assert!((d.prob(0) - 0.75).abs() < 1e-6);
        assert!((d.prob(1) - 0.25).abs() < 1e-6);
    }

    #[test]
    fn fit_never_produces_hard_zero() {
        let mut s = CategoricalStats::new(3);
        s.add(0, 10.0);
        let d = s.fit().unwrap();
        assert!(d.log_probs().iter().all(|l| l.is_finite()));
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_is_an_error() {
        assert!(matches!(CategoricalStats::new(4).fit(), Err(Error::ZeroWeight)));
    }

    #[test]
    fn degenerate_distribution_always_samples_its_mass() {
        let d = CategoricalDist::new(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let mut rng = rng_for(1, Domain::Sample, 0);
        for _ in 0..1000 {
            assert_eq!(d.sample(&mut rng), 2);
        }
    }

    #[test]
    fn rejects_unnormalized_input() {
        assert!(CategoricalDist::new(vec![0.5, 0.6]).is_err());
        assert!(CategoricalDist::new(vec![]).is_err());
        assert!(CategoricalDist::new(vec![-0.5, 1.5]).is_err());
    }

    #[test]
    fn out_of_vocabulary_lookup_fails() {
        let d = CategoricalDist::uniform(3);
        assert!(matches!(d.log_prob(3), Err(Error::UnknownToken { id: 3, vocab_size: 3 })));
    }
}
