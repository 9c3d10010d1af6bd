use rand::Rng;
use serde::{Deserialize, Serialize};

use super::categorical::{CategoricalDist, CategoricalStats};
use crate::error::{Error, Result};

/// First-order Markov chain over `0..len`: an initial distribution plus one
/// transition row per source item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainParams", into = "ChainParams")]
pub struct MarkovChainDist {
    initial: CategoricalDist,
    transitions: Vec<CategoricalDist>,
}

#[derive(Serialize, Deserialize)]
struct ChainParams {
    initial: CategoricalDist,
    transitions: Vec<CategoricalDist>,
}

impl MarkovChainDist {
    pub fn new(initial: CategoricalDist, transitions: Vec<CategoricalDist>) -> Result<Self> {
        let n = initial.len();
        if transitions.len() != n || transitions.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "markov chain over {n} items needs a {n}x{n} transition matrix"
            )));
        }
        Ok(Self {
            initial,
            transitions,
        })
    }

    pub fn uniform(len: usize) -> Self {
        Self {
            initial: CategoricalDist::uniform(len),
            transitions: vec![CategoricalDist::uniform(len); len],
        }
    }

    pub fn len(&self) -> usize {
        self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty()
    }

    pub fn initial(&self) -> &CategoricalDist {
        &self.initial
    }

    pub fn transitions(&self) -> &[CategoricalDist] {
        &self.transitions
    }

    pub fn transition(&self, from: usize) -> &CategoricalDist {
        &self.transitions[from]
    }

    #[inline]
    pub fn log_transition(&self, from: usize, to: usize) -> f64 {
        self.transitions[from].log_probs()[to]
    }

    /// `log p(seq[0]) + Σ log q(seq[i], seq[i+1])`.
    pub fn log_likelihood(&self, seq: &[usize]) -> Result<f64> {
        let (&first, _) = seq.split_first().ok_or(Error::EmptySequence)?;
        let mut total = self.initial.log_prob(first)?;
        for pair in seq.windows(2) {
            self.initial.log_prob(pair[1])?;
            total += self.transitions[pair[0]].log_probs()[pair[1]];
        }
        Ok(total)
    }

    pub fn sample_path<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<usize> {
        let mut path = Vec::with_capacity(len);
        if len == 0 {
            return path;
        }
        let mut current = self.initial.sample(rng);
        path.push(current);
        for _ in 1..len {
            current = self.transitions[current].sample(rng);
            path.push(current);
        }
        path
    }

    /// Relabels items: new item `i` is old item `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            initial: self.initial.permuted(order),
            transitions: order
                .iter()
                .map(|&from| self.transitions[from].permuted(order))
                .collect(),
        }
    }
}

impl TryFrom<ChainParams> for MarkovChainDist {
    type Error = Error;

    fn try_from(p: ChainParams) -> Result<Self> {
        Self::new(p.initial, p.transitions)
    }
}

impl From<MarkovChainDist> for ChainParams {
    fn from(d: MarkovChainDist) -> Self {
        Self {
            initial: d.initial,
            transitions: d.transitions,
        }
    }
}

/// Weighted initial-item and transition counts.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChainStats {
    initial: CategoricalStats,
    transitions: Vec<CategoricalStats>,
}

impl MarkovChainStats {
    pub fn new(len: usize) -> Self {
        Self {
            initial: CategoricalStats::new(len),
            transitions: vec![CategoricalStats::new(len); len],
        }
    }

    pub fn add_path(&mut self, seq: &[usize], weight: f64) {
        if let Some(&first) = seq.first() {
            self.initial.add(first, weight);
        }
        for pair in seq.windows(2) {
            self.transitions[pair[0]].add(pair[1], weight);
        }
    }

    #[inline]
    pub fn add_initial(&mut self, item: usize, weight: f64) {
        self.initial.add(item, weight);
    }

    #[inline]
    pub fn add_transition(&mut self, from: usize, to: usize, weight: f64) {
        self.transitions[from].add(to, weight);
    }

    pub fn merge(&mut self, other: &Self) {
        self.initial.merge(&other.initial);
        for (a, b) in self.transitions.iter_mut().zip(&other.transitions) {
            a.merge(b);
        }
    }

    /// Row-wise smoothed categorical updates. Rows without any weight keep the
    /// corresponding row of `previous` (uniform when there is none).
    pub fn fit(&self, previous: Option<&MarkovChainDist>) -> Result<MarkovChainDist> {
        let n = self.initial.counts().len();
        let initial = match self.initial.fit() {
            Ok(d) => d,
            Err(Error::ZeroWeight) => match previous {
                Some(p) => p.initial.clone(),
                None => return Err(Error::ZeroWeight),
            },
            Err(e) => return Err(e),
        };
        let transitions = self
            .transitions
            .iter()
            .enumerate()
            .map(|(from, row)| match row.fit() {
                Ok(d) => Ok(d),
                Err(Error::ZeroWeight) => Ok(previous
                    .map(|p| p.transitions[from].clone())
                    .unwrap_or_else(|| CategoricalDist::uniform(n))),
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()?;
        MarkovChainDist::new(initial, transitions)
    }
}
