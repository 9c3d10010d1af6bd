use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::ln_factorial;

/// Lower bound on every fitted rate.
pub const RATE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PoissonDist {
    rate: f64,
}

impl PoissonDist {
    pub fn new(rate: f64) -> Result<Self> {
        if !rate.is_finite() || rate < RATE_FLOOR {
            return Err(Error::InvalidParameter(format!(
                "poisson rate {rate} must be finite and at least {RATE_FLOOR}"
            )));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `k·ln(rate) − rate − ln(k!)`.
    #[inline]
    pub fn log_pmf(&self, k: usize) -> f64 {
        k as f64 * self.rate.ln() - self.rate - ln_factorial(k as u64)
    }

    pub fn pmf(&self, k: usize) -> f64 {
        self.log_pmf(k).exp()
    }

    /// `P(N ≤ k)`.
    pub fn cdf(&self, k: usize) -> f64 {
        statrs::function::gamma::gamma_ur(k as f64 + 1.0, self.rate)
    }

    /// `P(N ≥ k)`.
    pub fn tail(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            statrs::function::gamma::gamma_lr(k as f64, self.rate)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        // rate >= RATE_FLOOR > 0, so construction cannot fail.
        let dist = Poisson::new(self.rate).expect("valid poisson rate");
        dist.sample(rng) as usize
    }
}

impl TryFrom<f64> for PoissonDist {
    type Error = Error;

    fn try_from(rate: f64) -> Result<Self> {
        Self::new(rate)
    }
}

impl From<PoissonDist> for f64 {
    fn from(d: PoissonDist) -> Self {
        d.rate
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PoissonStats {
    weight: f64,
    sum: f64,
}

impl PoissonStats {
    #[inline]
    pub fn add(&mut self, k: usize, weight: f64) {
        self.weight += weight;
        self.sum += weight * k as f64;
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn merge(&mut self, other: &Self) {
        self.weight += other.weight;
        self.sum += other.sum;
    }

    pub fn fit(&self) -> Result<PoissonDist> {
        if !(self.weight > 0.0) {
            return Err(Error::ZeroWeight);
        }
        PoissonDist::new((self.sum / self.weight).max(RATE_FLOOR))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_for, Domain};

    #[test]
    fn closed_forms() {
        let d = PoissonDist::new(1.0).unwrap();
        assert!((d.log_pmf(0) + 1.0).abs() < 1e-15);
        let d = PoissonDist::new(2.0).unwrap();
        assert!((d.log_pmf(2) - (2.0f64.ln() - 2.0)).abs() < 1e-14);
        assert!((d.log_pmf(2) - (-1.3068528194400546)).abs() < 1e-14);
    }

    /// ln(k!) summed term by term with compensated summation.
    fn ln_factorial_oracle(k: usize) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for i in 2..=k {
            let y = (i as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }

    #[test]
    fn large_count_matches_direct_summation() {
        let d = PoissonDist::new(12.73).unwrap();
        let expected = 964.0 * 12.73f64.ln() - 12.73 - ln_factorial_oracle(964);
        let got = d.log_pmf(964);
        assert!(got.is_finite());
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        assert!(PoissonDist::new(3.0).unwrap().log_pmf(1_000_000).is_finite());
    }

    #[test]
    fn weighted_mean_update() {
        let mut s = PoissonStats::default();
        s.add(2, 1.0);
        s.add(4, 1.0);
        assert_eq!(s.fit().unwrap().rate(), 3.0);
        let mut zeros = PoissonStats::default();
        zeros.add(0, 5.0);
        assert_eq!(zeros.fit().unwrap().rate(), RATE_FLOOR);
        assert!(matches!(PoissonStats::default().fit(), Err(Error::ZeroWeight)));
    }

    #[test]
    fn tail_and_cdf_are_complementary() {
        let d = PoissonDist::new(2.5).unwrap();
        for k in 0..10 {
            let direct: f64 = (0..=k).map(|j| d.pmf(j)).sum();
            assert!((d.cdf(k) - direct).abs() < 1e-12);
            assert!((d.tail(k + 1) - (1.0 - direct)).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_mean_within_three_standard_errors() {
        let d = PoissonDist::new(5.0).unwrap();
        let mut rng = rng_for(11, Domain::Sample, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| d.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        let se = (5.0f64 / n as f64).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * se, "mean {mean}");
    }
}
