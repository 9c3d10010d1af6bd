use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted probabilities are clamped to `[c, 1 − c]`.
pub const BERNOULLI_CLAMP: f64 = 1e-9;

/// `p` is the probability of observing `true` (the value 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BernoulliDist {
    p: f64,
}

impl BernoulliDist {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("bernoulli p={p} outside [0, 1]")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    #[inline]
    pub fn log_pmf(&self, x: bool) -> f64 {
        if x {
            self.p.ln()
        } else {
            (1.0 - self.p).ln()
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random::<f64>() < self.p
    }
}

impl TryFrom<f64> for BernoulliDist {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<BernoulliDist> for f64 {
    fn from(d: BernoulliDist) -> Self {
        d.p
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BernoulliStats {
    weight: f64,
    ones: f64,
}

impl BernoulliStats {
    #[inline]
    pub fn add(&mut self, x: bool, weight: f64) {
        self.weight += weight;
        if x {
            self.ones += weight;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.weight += other.weight;
        self.ones += other.ones;
    }

    pub fn fit(&self) -> Result<BernoulliDist> {
        if !(self.weight > 0.0) {
            return Err(Error::ZeroWeight);
        }
        let p = (self.ones / self.weight).clamp(BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP);
        BernoulliDist::new(p)
    }
}
