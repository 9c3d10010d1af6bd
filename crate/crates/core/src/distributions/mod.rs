//! Elementary distributions composed by the episode model.
//!
//! Every distribution keeps its linear-space parameters as the canonical
//! representation and derives log-space tables from them on construction, so
//! a value rebuilt from its saved parameters is bit-identical to the original.
//! Each distribution has a matching `*Stats` accumulator of weighted
//! sufficient statistics whose `fit` performs the weighted maximum-likelihood
//! update.

mod bernoulli;
mod categorical;
mod markov;
mod poisson;
mod qgauss;

pub use bernoulli::{BernoulliDist, BernoulliStats, BERNOULLI_CLAMP};
pub use categorical::{CategoricalDist, CategoricalStats, SMOOTHING};
pub use markov::{MarkovChainDist, MarkovChainStats};
pub use poisson::{PoissonDist, PoissonStats, RATE_FLOOR};
pub use qgauss::{GaussianStats, QuantizedGaussianDist, DEFAULT_AGE_SUPPORT, VARIANCE_FLOOR};
