use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{dirichlet_one, or_keep, Merge, SubModel};
use crate::distributions::{CategoricalDist, CategoricalStats, PoissonDist, PoissonStats};
use crate::error::{Error, Result};

/// One mixture state for unordered multisets: a Poisson item count and i.i.d.
/// categorical items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectionState {
    pub length: PoissonDist,
    pub items: CategoricalDist,
}

impl CollectionState {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let n = self.length.sample(rng);
        (0..n).map(|_| self.items.sample(rng)).collect()
    }
}

/// Poisson term for the multiset size plus one categorical term per item.
/// The empty multiset contributes the Poisson(0) term only.
pub fn collection_log_lik(items: &[usize], state: &CollectionState) -> Result<f64> {
    let mut total = state.length.log_pmf(items.len());
    for &i in items {
        total += state.items.log_prob(i)?;
    }
    Ok(total)
}

/// The state list shared by the admission and discharge diagnosis streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CollectionPoolDoc")]
pub struct CollectionPool {
    states: Vec<CollectionState>,
}

#[derive(Deserialize)]
struct CollectionPoolDoc {
    states: Vec<CollectionState>,
}

impl TryFrom<CollectionPoolDoc> for CollectionPool {
    type Error = Error;

    fn try_from(doc: CollectionPoolDoc) -> Result<Self> {
        Self::new(doc.states)
    }
}

impl CollectionPool {
    pub fn new(states: Vec<CollectionState>) -> Result<Self> {
        let vocab = states
            .first()
            .map(|s| s.items.len())
            .ok_or_else(|| Error::InvalidParameter("collection pool needs at least one state".into()))?;
        if states.iter().any(|s| s.items.len() != vocab) {
            return Err(Error::DimensionMismatch(
                "collection states disagree on vocabulary size".into(),
            ));
        }
        Ok(Self { states })
    }

    pub fn states(&self) -> &[CollectionState] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &CollectionState {
        &self.states[k]
    }

    pub fn vocab_size(&self) -> usize {
        self.states[0].items.len()
    }

    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            states: order.iter().map(|&k| self.states[k].clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollectionStats {
    length: Vec<PoissonStats>,
    items: Vec<CategoricalStats>,
}

impl Merge for CollectionStats {
    fn merge(&mut self, other: &Self) {
        for (a, b) in self.length.iter_mut().zip(&other.length) {
            a.merge(b);
        }
        for (a, b) in self.items.iter_mut().zip(&other.items) {
            a.merge(b);
        }
    }
}

impl SubModel for CollectionPool {
    type Obs = [usize];
    type Cache = ();
    type Stats = CollectionStats;

    fn n_states(&self) -> usize {
        self.states.len()
    }

    fn evaluate(&self, obs: &[usize]) -> Result<(Vec<f64>, ())> {
        let ll = self
            .states
            .iter()
            .map(|s| collection_log_lik(obs, s))
            .collect::<Result<Vec<_>>>()?;
        Ok((ll, ()))
    }

    fn new_stats(&self) -> CollectionStats {
        CollectionStats {
            length: vec![PoissonStats::default(); self.states.len()],
            items: vec![CategoricalStats::new(self.vocab_size()); self.states.len()],
        }
    }

    fn accumulate(&self, obs: &[usize], _: &(), state_weights: &[f64], stats: &mut CollectionStats) {
        for (k, &w) in state_weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            stats.length[k].add(obs.len(), w);
            for &i in obs {
                stats.items[k].add(i, w);
            }
        }
    }

    fn accumulate_random(
        &self,
        obs: &[usize],
        state_weights: &[f64],
        _: &mut dyn rand::RngCore,
        stats: &mut CollectionStats,
    ) {
        self.accumulate(obs, &(), state_weights, stats);
    }

    fn m_step(&self, stats: &CollectionStats) -> Result<Self> {
        let states = self
            .states
            .iter()
            .enumerate()
            .map(|(k, prev)| {
                Ok(CollectionState {
                    length: or_keep(stats.length[k].fit(), &prev.length)?,
                    items: or_keep(stats.items[k].fit(), &prev.items)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { states })
    }
}

impl CollectionPool {
    /// Random starting point: Dirichlet(1) item distributions and the given rate.
    pub fn random<R: Rng + ?Sized>(n_states: usize, vocab: usize, rate: f64, rng: &mut R) -> Result<Self> {
        let states = (0..n_states)
            .map(|_| {
                Ok(CollectionState {
                    length: PoissonDist::new(rate.max(crate::distributions::RATE_FLOOR))?,
                    items: CategoricalDist::new(dirichlet_one(vocab, rng))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(states)
    }
}
