use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{dirichlet_one, or_keep, Merge, SubModel};
use crate::distributions::{
    CategoricalDist, MarkovChainDist, MarkovChainStats, PoissonDist, PoissonStats, RATE_FLOOR,
};
use crate::error::{Error, Result};

/// A Poisson sequence length and a Markov chain over the items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovSeqState {
    pub length: PoissonDist,
    pub chain: MarkovChainDist,
}

impl MarkovSeqState {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let n = self.length.sample(rng);
        self.chain.sample_path(n, rng)
    }
}

/// Poisson length term plus the chain likelihood. Empty sequences contribute
/// the Poisson(0) term only.
pub fn mseq_log_lik(seq: &[usize], state: &MarkovSeqState) -> Result<f64> {
    let length = state.length.log_pmf(seq.len());
    if seq.is_empty() {
        return Ok(length);
    }
    Ok(length + state.chain.log_likelihood(seq)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarkovMixtureDoc")]
pub struct MarkovMixture {
    states: Vec<MarkovSeqState>,
}

#[derive(Deserialize)]
struct MarkovMixtureDoc {
    states: Vec<MarkovSeqState>,
}

impl TryFrom<MarkovMixtureDoc> for MarkovMixture {
    type Error = Error;

    fn try_from(doc: MarkovMixtureDoc) -> Result<Self> {
        Self::new(doc.states)
    }
}

impl MarkovMixture {
    pub fn new(states: Vec<MarkovSeqState>) -> Result<Self> {
        let vocab = states
            .first()
            .map(|s| s.chain.len())
            .ok_or_else(|| Error::InvalidParameter("markov mixture needs at least one state".into()))?;
        if states.iter().any(|s| s.chain.len() != vocab) {
            return Err(Error::DimensionMismatch(
                "markov mixture states disagree on vocabulary size".into(),
            ));
        }
        Ok(Self { states })
    }

    pub fn random<R: Rng + ?Sized>(n_states: usize, vocab: usize, rate: f64, rng: &mut R) -> Result<Self> {
        let states = (0..n_states)
            .map(|_| {
                let initial = CategoricalDist::new(dirichlet_one(vocab, rng))?;
                let rows = (0..vocab)
                    .map(|_| CategoricalDist::new(dirichlet_one(vocab, rng)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(MarkovSeqState {
                    length: PoissonDist::new(rate.max(RATE_FLOOR))?,
                    chain: MarkovChainDist::new(initial, rows)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(states)
    }

    pub fn states(&self) -> &[MarkovSeqState] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &MarkovSeqState {
        &self.states[k]
    }

    pub fn vocab_size(&self) -> usize {
        self.states[0].chain.len()
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            states: order.iter().map(|&k| self.states[k].clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovSeqStats {
    length: Vec<PoissonStats>,
    chain: Vec<MarkovChainStats>,
}

impl Merge for MarkovSeqStats {
    fn merge(&mut self, other: &Self) {
        for (a, b) in self.length.iter_mut().zip(&other.length) {
            a.merge(b);
        }
        for (a, b) in self.chain.iter_mut().zip(&other.chain) {
            a.merge(b);
        }
    }
}

impl SubModel for MarkovMixture {
    type Obs = [usize];
    type Cache = ();
    type Stats = MarkovSeqStats;

    fn n_states(&self) -> usize {
        self.states.len()
    }

    fn evaluate(&self, obs: &[usize]) -> Result<(Vec<f64>, ())> {
        let ll = self
            .states
            .iter()
            .map(|s| mseq_log_lik(obs, s))
            .collect::<Result<Vec<_>>>()?;
        Ok((ll, ()))
    }

    fn new_stats(&self) -> MarkovSeqStats {
        MarkovSeqStats {
            length: vec![PoissonStats::default(); self.states.len()],
            chain: vec![MarkovChainStats::new(self.vocab_size()); self.states.len()],
        }
    }

    fn accumulate(&self, obs: &[usize], _: &(), state_weights: &[f64], stats: &mut MarkovSeqStats) {
        for (k, &w) in state_weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            stats.length[k].add(obs.len(), w);
            stats.chain[k].add_path(obs, w);
        }
    }

    fn accumulate_random(
        &self,
        obs: &[usize],
        state_weights: &[f64],
        _: &mut dyn rand::RngCore,
        stats: &mut MarkovSeqStats,
    ) {
        self.accumulate(obs, &(), state_weights, stats);
    }

    fn m_step(&self, stats: &MarkovSeqStats) -> Result<Self> {
        let states = self
            .states
            .iter()
            .enumerate()
            .map(|(k, prev)| {
                Ok(MarkovSeqState {
                    length: or_keep(stats.length[k].fit(), &prev.length)?,
                    chain: or_keep(stats.chain[k].fit(Some(&prev.chain)), &prev.chain)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { states })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ed_icu_state(rate: f64) -> MarkovSeqState {
        // item 0 = ED, item 1 = ICU
        MarkovSeqState {
            length: PoissonDist::new(rate).unwrap(),
            chain: MarkovChainDist::new(
                CategoricalDist::new(vec![1.0, 0.0]).unwrap(),
                vec![
                    CategoricalDist::new(vec![0.0, 1.0]).unwrap(),
                    CategoricalDist::new(vec![0.0, 1.0]).unwrap(),
                ],
            )
            .unwrap(),
        }
    }

    #[test]
    fn single_item_closed_form() {
        let ll = mseq_log_lik(&[0], &ed_icu_state(1.0)).unwrap();
        assert!((ll + 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_items_deterministic_chain() {
        let ll = mseq_log_lik(&[0, 1], &ed_icu_state(2.0)).unwrap();
        assert!((ll - (2.0f64.ln() - 2.0)).abs() < 1e-14);
    }

    #[test]
    fn empty_sequence_is_poisson_zero() {
        let ll = mseq_log_lik(&[], &ed_icu_state(2.0)).unwrap();
        assert!((ll + 2.0).abs() < 1e-15);
    }

    #[test]
    fn random_chain_matches_direct_product() {
        let init = [0.1, 0.2, 0.3, 0.4];
        let q = [
            [0.25, 0.25, 0.25, 0.25],
            [0.1, 0.6, 0.2, 0.1],
            [0.3, 0.3, 0.2, 0.2],
            [0.05, 0.05, 0.1, 0.8],
        ];
        let state = MarkovSeqState {
            length: PoissonDist::new(2.2).unwrap(),
            chain: MarkovChainDist::new(
                CategoricalDist::new(init.to_vec()).unwrap(),
                q.iter().map(|r| CategoricalDist::new(r.to_vec()).unwrap()).collect(),
            )
            .unwrap(),
        };
        let seq = [3, 1, 1, 2];
        let mut direct = 2.2f64.powi(4) * (-2.2f64).exp() / 24.0 * init[3];
        for w in seq.windows(2) {
            direct *= q[w[0]][w[1]];
        }
        assert!((mseq_log_lik(&seq, &state).unwrap() - direct.ln()).abs() < 1e-12);
    }
}
