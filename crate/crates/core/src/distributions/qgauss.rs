use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::log_sum_exp;

/// Variance floor applied by the M-step (years²).
pub const VARIANCE_FLOOR: f64 = 0.25;

/// Default integer support for ages, in years.
pub const DEFAULT_AGE_SUPPORT: (i64, i64) = (0, 120);

/// Gaussian density evaluated on the integers of `[support_min, support_max]`
/// and renormalized to sum to one over that support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QGaussParams", into = "QGaussParams")]
pub struct QuantizedGaussianDist {
    mean: f64,
    variance: f64,
    support_min: i64,
    support_max: i64,
    log_normalizer: f64,
}

#[derive(Serialize, Deserialize)]
struct QGaussParams {
    mean: f64,
    variance: f64,
    support_min: i64,
    support_max: i64,
}

impl QuantizedGaussianDist {
    pub fn new(mean: f64, variance: f64, support_min: i64, support_max: i64) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() || variance <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "quantized gaussian needs finite mean and positive variance, got ({mean}, {variance})"
            )));
        }
        if support_min > support_max {
            return Err(Error::InvalidParameter(format!(
                "empty support [{support_min}, {support_max}]"
            )));
        }
        let log_scale = 0.5 * (2.0 * PI * variance).ln();
        let terms: Vec<f64> = (support_min..=support_max)
            .map(|a| -(mean - a as f64).powi(2) / (2.0 * variance) - log_scale)
            .collect();
        let log_normalizer = log_sum_exp(&terms);
        Ok(Self {
            mean,
            variance,
            support_min,
            support_max,
            log_normalizer,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn support(&self) -> (i64, i64) {
        (self.support_min, self.support_max)
    }

    /// Log of the sum of the unnormalized densities over the support.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn contains(&self, a: i64) -> bool {
        (self.support_min..=self.support_max).contains(&a)
    }

    pub fn log_pmf(&self, a: i64) -> Result<f64> {
        if !self.contains(a) {
            return Err(Error::OutOfSupport {
                value: a,
                min: self.support_min,
                max: self.support_max,
            });
        }
        Ok(-(self.mean - a as f64).powi(2) / (2.0 * self.variance)
            - self.log_normalizer
            - 0.5 * (2.0 * PI * self.variance).ln())
    }

    /// Probabilities over the support, in ascending order of value.
    pub fn pmf_table(&self) -> Vec<f64> {
        (self.support_min..=self.support_max)
            .map(|a| self.log_pmf(a).map(f64::exp).unwrap_or(0.0))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        for (offset, p) in self.pmf_table().into_iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return self.support_min + offset as i64;
            }
        }
        self.support_max
    }
}

impl TryFrom<QGaussParams> for QuantizedGaussianDist {
    type Error = Error;

    fn try_from(p: QGaussParams) -> Result<Self> {
        Self::new(p.mean, p.variance, p.support_min, p.support_max)
    }
}

impl From<QuantizedGaussianDist> for QGaussParams {
    fn from(d: QuantizedGaussianDist) -> Self {
        Self {
            mean: d.mean,
            variance: d.variance,
            support_min: d.support_min,
            support_max: d.support_max,
        }
    }
}

/// Weighted first and second moments of integer observations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GaussianStats {
    weight: f64,
    sum: f64,
    sum_sq: f64,
}

impl GaussianStats {
    #[inline]
    pub fn add(&mut self, a: i64, weight: f64) {
        let x = a as f64;
        self.weight += weight;
        self.sum += weight * x;
        self.sum_sq += weight * x * x;
    }

    pub fn merge(&mut self, other: &Self) {
        self.weight += other.weight;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    /// Mean log-likelihood of the observations under `d`.
    pub fn mean_log_lik(&self, d: &QuantizedGaussianDist) -> f64 {
        let (m1, m2) = (self.sum / self.weight, self.sum_sq / self.weight);
        let v = d.variance;
        -(m2 - 2.0 * d.mean * m1 + d.mean * d.mean) / (2.0 * v)
            - d.log_normalizer
            - 0.5 * (2.0 * PI * v).ln()
    }

    /// Maximum-likelihood fit on the support of `prev`, accounting for
    /// truncation and quantization, with the variance kept at or above
    /// [`VARIANCE_FLOOR`]. Returns `prev` unchanged when no candidate beats it,
    /// so an EM step never lowers this term.
    pub fn fit(&self, prev: &QuantizedGaussianDist) -> Result<QuantizedGaussianDist> {
        if !(self.weight > 0.0) {
            return Err(Error::ZeroWeight);
        }
        let (lo, hi) = prev.support();
        let m1 = self.sum / self.weight;
        let m2 = self.sum_sq / self.weight;
        let moment = QuantizedGaussianDist::new(m1, (m2 - m1 * m1).max(VARIANCE_FLOOR), lo, hi)?;
        let mut best = prev.clone();
        let mut best_ll = self.mean_log_lik(&best);
        for cand in [Some(moment), natural_mle(m1, m2, lo, hi)].into_iter().flatten() {
            let ll = self.mean_log_lik(&cand);
            if ll > best_ll {
                best = cand;
                best_ll = ll;
            }
        }
        Ok(best)
    }
}

/// The truncated family in natural coordinates over `x = (a − c)/s ∈ [−1, 1]`,
/// with weights `exp(θ₁x + θ₂x²)`. The mean is confined to the support and the
/// variance to `[VARIANCE_FLOOR, (hi − lo + 1)²]`; in `θ` both are linear
/// constraints, and the objective is concave.
struct Family {
    xs: Vec<f64>,
    /// Target moments of `x` and `x²`.
    t: [f64; 2],
    c: f64,
    s: f64,
    th2_min: f64,
    th2_max: f64,
}

impl Family {
    fn new(lo: i64, hi: i64, m1: f64, m2: f64) -> Self {
        let c = (lo + hi) as f64 / 2.0;
        let s = (hi - lo) as f64 / 2.0;
        let v_max = ((hi - lo + 1) as f64).powi(2);
        Self {
            xs: (lo..=hi).map(|a| (a as f64 - c) / s).collect(),
            t: [(m1 - c) / s, (m2 - 2.0 * c * m1 + c * c) / (s * s)],
            c,
            s,
            th2_min: -s * s / (2.0 * VARIANCE_FLOOR),
            th2_max: -s * s / (2.0 * v_max),
        }
    }

    /// Log-partition, `E[x], E[x²]` and their covariance.
    fn moments(&self, th: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let logits: Vec<f64> = self.xs.iter().map(|&x| th[0] * x + th[1] * x * x).collect();
        let a = log_sum_exp(&logits);
        let (mut e1, mut e2, mut e3, mut e4) = (0.0, 0.0, 0.0, 0.0);
        for (&x, &l) in self.xs.iter().zip(&logits) {
            let p = (l - a).exp();
            let x2 = x * x;
            e1 += p * x;
            e2 += p * x2;
            e3 += p * x2 * x;
            e4 += p * x2 * x2;
        }
        let cov = [[e2 - e1 * e1, e3 - e1 * e2], [e3 - e1 * e2, e4 - e2 * e2]];
        (a, [e1, e2], cov)
    }

    fn objective(&self, th: [f64; 2]) -> f64 {
        th[0] * self.t[0] + th[1] * self.t[1] - self.moments(th).0
    }

    fn feasible(&self, th: [f64; 2]) -> bool {
        (self.th2_min..=self.th2_max).contains(&th[1]) && (2.0 * th[1]..=-2.0 * th[1]).contains(&th[0])
    }

    fn from_dist(&self, mean: f64, var: f64) -> [f64; 2] {
        let eta2 = -1.0 / (2.0 * var);
        [self.s * (mean / var + 2.0 * eta2 * self.c), eta2 * self.s * self.s]
    }

    fn to_dist(&self, th: [f64; 2], lo: i64, hi: i64) -> Option<QuantizedGaussianDist> {
        let var = -self.s * self.s / (2.0 * th[1]);
        let mean = self.c + self.s * (-th[0] / (2.0 * th[1]));
        QuantizedGaussianDist::new(mean, var.max(VARIANCE_FLOOR), lo, hi).ok()
    }

    /// Unconstrained Newton ascent; `None` unless it converges.
    fn newton(&self, mut th: [f64; 2]) -> Option<[f64; 2]> {
        let mut f = self.objective(th);
        for _ in 0..50 {
            let (_, e, h) = self.moments(th);
            let g = [self.t[0] - e[0], self.t[1] - e[1]];
            if g[0].abs() + g[1].abs() < 1e-13 {
                return Some(th);
            }
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            if !(det > 0.0) {
                return None;
            }
            let step = [
                (h[1][1] * g[0] - h[0][1] * g[1]) / det,
                (h[0][0] * g[1] - h[1][0] * g[0]) / det,
            ];
            let mut alpha = 1.0;
            loop {
                let cand = [th[0] + alpha * step[0], th[1] + alpha * step[1]];
                if cand[1] < 0.0 {
                    let fc = self.objective(cand);
                    if fc >= f {
                        th = cand;
                        f = fc;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-10 {
                    return None;
                }
            }
        }
        None
    }

    /// Best `θ₁` for fixed `θ₂` over the admissible mean range, by safeguarded
    /// Newton on the (decreasing) derivative `t₁ − E[x]`.
    fn best_th1(&self, th2: f64) -> f64 {
        let (mut l, mut r) = (2.0 * th2, -2.0 * th2);
        let deriv = |th1: f64| {
            let (_, e, h) = self.moments([th1, th2]);
            (self.t[0] - e[0], h[0][0])
        };
        if deriv(l).0 <= 0.0 {
            return l;
        }
        if deriv(r).0 >= 0.0 {
            return r;
        }
        let mut x = 0.5 * (l + r);
        for _ in 0..100 {
            let (d, var) = deriv(x);
            if d.abs() < 1e-14 {
                break;
            }
            if d > 0.0 {
                l = x;
            } else {
                r = x;
            }
            let newton = x + d / var.max(1e-300);
            x = if newton > l && newton < r { newton } else { 0.5 * (l + r) };
            if r - l < 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        x
    }

    /// Golden-section search over `θ₂` of the profile `max_θ₁`, which is concave.
    fn profile_search(&self) -> [f64; 2] {
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let value = |th2: f64| {
            let th1 = self.best_th1(th2);
            (self.objective([th1, th2]), th1)
        };
        let (mut a, mut b) = (self.th2_min, self.th2_max);
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let (mut f1, mut f2) = (value(x1).0, value(x2).0);
        while b - a > 1e-12 * (1.0 + a.abs()) {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = value(x2).0;
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = value(x1).0;
            }
        }
        let best = [a, b, 0.5 * (a + b)]
            .into_iter()
            .map(|th2| {
                let (f, th1) = value(th2);
                (f, [th1, th2])
            })
            .fold((f64::NEG_INFINITY, [0.0, 0.0]), |acc, c| if c.0 > acc.0 { c } else { acc });
        best.1
    }
}

fn natural_mle(m1: f64, m2: f64, lo: i64, hi: i64) -> Option<QuantizedGaussianDist> {
    if lo == hi {
        return None;
    }
    let fam = Family::new(lo, hi, m1, m2);
    let start = fam.from_dist(m1, (m2 - m1 * m1).max(VARIANCE_FLOOR));
    let th = fam
        .newton(start)
        .filter(|&th| fam.feasible(th))
        .unwrap_or_else(|| fam.profile_search());
    fam.to_dist(th, lo, hi)
}
