//! Stream sub-models: mixtures whose states each describe a whole stream.
//!
//! * [`CollectionPool`] for unordered code multisets (admission and discharge
//!   diagnoses share one pool),
//! * [`MarkovMixture`] for single-item sequences (beds),
//! * [`HmmMixture`] for sequences of multisets (labs, neuro, meds), where the
//!   per-HMM-state emission table is shared by every mixture state.
//!
//! All three implement [`SubModel`], which is what the EM drivers in
//! `model` and `selection` are written against.

mod collection;
mod hmm;
mod markov_seq;

use rand::Rng;

pub use collection::{collection_log_lik, CollectionPool, CollectionState, CollectionStats};
pub use hmm::{
    hmm_forward, HmmCache, HmmEmission, HmmEmissionState, HmmMixture, HmmPosterior, HmmSeqState,
    HmmStats,
};
pub use markov_seq::{mseq_log_lik, MarkovMixture, MarkovSeqState, MarkovSeqStats};

use crate::error::Result;
use crate::math::normalize_log_weights;

/// Associative, commutative combination of sufficient statistics.
pub trait Merge {
    fn merge(&mut self, other: &Self);
}

/// A mixture over whole-stream observations.
pub trait SubModel: Sized + Clone + Send + Sync {
    type Obs: ?Sized + Sync;
    /// Per-observation intermediate results reused between scoring and accumulation.
    type Cache: Send;
    type Stats: Merge + Clone + Send;

    fn n_states(&self) -> usize;

    /// Log-likelihood of `obs` under every mixture state.
    fn evaluate(&self, obs: &Self::Obs) -> Result<(Vec<f64>, Self::Cache)>;

    fn new_stats(&self) -> Self::Stats;

    /// Adds `obs` to `stats` with per-state weights `state_weights`.
    fn accumulate(
        &self,
        obs: &Self::Obs,
        cache: &Self::Cache,
        state_weights: &[f64],
        stats: &mut Self::Stats,
    );

    /// Like [`SubModel::accumulate`], with any latent structure below the mixture
    /// layer drawn at random instead of inferred. Used for initialization.
    fn accumulate_random(
        &self,
        obs: &Self::Obs,
        state_weights: &[f64],
        rng: &mut dyn rand::RngCore,
        stats: &mut Self::Stats,
    );

    /// Maximization step; states without weight keep their current parameters.
    fn m_step(&self, stats: &Self::Stats) -> Result<Self>;
}

/// Posterior over sub-model states given per-state log-likelihoods and the
/// log mixing weights. Returns the log marginal and the normalized posterior.
pub fn stream_posterior(log_lik_given_state: &[f64], mixing_log_weights: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(log_lik_given_state.len(), mixing_log_weights.len());
    let joint: Vec<f64> = log_lik_given_state
        .iter()
        .zip(mixing_log_weights)
        .map(|(l, w)| l + w)
        .collect();
    let mut gamma = Vec::with_capacity(joint.len());
    let log_marginal = normalize_log_weights(&joint, &mut gamma);
    (log_marginal, gamma)
}

/// Symmetric Dirichlet(1) draw.
pub(crate) fn dirichlet_one<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..len)
        .map(|_| {
            let u: f64 = rng.random();
            -(1.0 - u).ln()
        })
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        draws.iter_mut().for_each(|d| *d = 1.0 / len as f64);
    }
    draws
}

/// Keeps `previous` when a fit has no weight behind it.
pub(crate) fn or_keep<T: Clone>(fitted: Result<T>, previous: &T) -> Result<T> {
    match fitted {
        Err(crate::Error::ZeroWeight) => Ok(previous.clone()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_posterior_is_certain() {
        let (lm, g) = stream_posterior(&[-3.2], &[0.0]);
        assert_eq!(g, vec![1.0]);
        assert!((lm + 3.2).abs() < 1e-15);
    }

    #[test]
    fn symmetric_states_split_evenly() {
        let w = 0.5f64.ln();
        let (_, g) = stream_posterior(&[-1.0, -1.0], &[w, w]);
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matches_linear_space_bayes_rule() {
        let lik = [0.02f64, 0.3, 0.11];
        let prior = [0.2f64, 0.5, 0.3];
        let log_lik: Vec<f64> = lik.iter().map(|x| x.ln()).collect();
        let log_prior: Vec<f64> = prior.iter().map(|x| x.ln()).collect();
        let (lm, g) = stream_posterior(&log_lik, &log_prior);
        let evidence: f64 = lik.iter().zip(&prior).map(|(a, b)| a * b).sum();
        assert!((lm - evidence.ln()).abs() < 1e-12);
        for i in 0..3 {
            assert!((g[i] - lik[i] * prior[i] / evidence).abs() < 1e-12);
        }
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}
