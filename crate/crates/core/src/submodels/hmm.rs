//! Mixture of HMMs over sequences of multisets.
//!
//! Each timepoint is a multiset of items. An HMM state emits a Poisson number
//! of items followed by that many i.i.d. categorical draws. The emission table
//! (one entry per HMM state) belongs to the mixture and is shared by all of its
//! states; each mixture state owns a sequence-length Poisson and the initial /
//! transition distribution over HMM states.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{dirichlet_one, or_keep, Merge, SubModel};
use crate::distributions::{
    CategoricalDist, CategoricalStats, MarkovChainDist, MarkovChainStats, PoissonDist,
    PoissonStats, RATE_FLOOR,
};
use crate::error::{Error, Result};
use crate::math::log_sum_exp;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmEmissionState {
    /// Items per timepoint.
    pub count: PoissonDist,
    pub items: CategoricalDist,
}

impl HmmEmissionState {
    #[inline]
    pub fn log_density(&self, multiset: &[usize]) -> Result<f64> {
        let mut total = self.count.log_pmf(multiset.len());
        for &i in multiset {
            total += self.items.log_prob(i)?;
        }
        Ok(total)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let n = self.count.sample(rng);
        (0..n).map(|_| self.items.sample(rng)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HmmEmissionDoc")]
pub struct HmmEmission {
    states: Vec<HmmEmissionState>,
}

#[derive(Deserialize)]
struct HmmEmissionDoc {
    states: Vec<HmmEmissionState>,
}

impl TryFrom<HmmEmissionDoc> for HmmEmission {
    type Error = Error;

    fn try_from(doc: HmmEmissionDoc) -> Result<Self> {
        Self::new(doc.states)
    }
}

impl HmmEmission {
    pub fn new(states: Vec<HmmEmissionState>) -> Result<Self> {
        let vocab = states
            .first()
            .map(|s| s.items.len())
            .ok_or_else(|| Error::InvalidParameter("emission table needs at least one HMM state".into()))?;
        if states.iter().any(|s| s.items.len() != vocab) {
            return Err(Error::DimensionMismatch(
                "emission states disagree on vocabulary size".into(),
            ));
        }
        Ok(Self { states })
    }

    pub fn n_hmm_states(&self) -> usize {
        self.states.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.states[0].items.len()
    }

    pub fn states(&self) -> &[HmmEmissionState] {
        &self.states
    }

    pub fn state(&self, s: usize) -> &HmmEmissionState {
        &self.states[s]
    }

    pub fn state_mut(&mut self, s: usize) -> &mut HmmEmissionState {
        &mut self.states[s]
    }

    /// Row-major `T × S` table of per-timepoint emission log-densities.
    pub fn log_densities(&self, seq: &[Vec<usize>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(seq.len() * self.states.len());
        for multiset in seq {
            for state in &self.states {
                out.push(state.log_density(multiset)?);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmSeqState {
    /// Number of timepoints.
    pub length: PoissonDist,
    pub state_chain: MarkovChainDist,
}

/// Smoothed posterior of one HMM given one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmPosterior {
    /// `log Σ_S f(seq, S)` excluding the sequence-length term.
    pub chain_log_lik: f64,
    /// `T` rows of `S` state marginals.
    pub state_marginals: Vec<Vec<f64>>,
    /// `T − 1` row-major `S × S` matrices of adjacent-pair marginals.
    pub transition_marginals: Vec<Vec<f64>>,
}

/// Log forward variables, row-major `T × S`.
fn forward(chain: &MarkovChainDist, emis: &[f64], n_hmm: usize) -> (Vec<f64>, f64) {
    let t_len = emis.len() / n_hmm;
    let mut alpha = vec![0.0; emis.len()];
    if t_len == 0 {
        return (alpha, 0.0);
    }
    let init = chain.initial().log_probs();
    for s in 0..n_hmm {
        alpha[s] = init[s] + emis[s];
    }
    let mut terms = vec![0.0; n_hmm];
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * n_hmm);
        let prev = &prev[(t - 1) * n_hmm..];
        for s in 0..n_hmm {
            for (r, term) in terms.iter_mut().enumerate() {
                *term = prev[r] + chain.log_transition(r, s);
            }
            cur[s] = log_sum_exp(&terms) + emis[t * n_hmm + s];
        }
    }
    let ll = log_sum_exp(&alpha[(t_len - 1) * n_hmm..]);
    (alpha, ll)
}

/// Log backward variables, row-major `T × S`.
fn backward(chain: &MarkovChainDist, emis: &[f64], n_hmm: usize) -> Vec<f64> {
    let t_len = emis.len() / n_hmm;
    let mut beta = vec![0.0; emis.len()];
    let mut terms = vec![0.0; n_hmm];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for r in 0..n_hmm {
            for (s, term) in terms.iter_mut().enumerate() {
                *term = chain.log_transition(r, s)
                    + emis[(t + 1) * n_hmm + s]
                    + beta[(t + 1) * n_hmm + s];
            }
            beta[t * n_hmm + r] = log_sum_exp(&terms);
        }
    }
    beta
}

enum Marginal {
    State { t: usize, s: usize, p: f64 },
    Pair { r: usize, s: usize, t: usize, p: f64 },
}

/// Visits every state marginal, then every adjacent-pair marginal.
fn visit_marginals(
    chain: &MarkovChainDist,
    emis: &[f64],
    alpha: &[f64],
    chain_ll: f64,
    n_hmm: usize,
    mut visit: impl FnMut(Marginal),
) {
    let t_len = emis.len() / n_hmm;
    if t_len == 0 || chain_ll == f64::NEG_INFINITY {
        return;
    }
    let beta = backward(chain, emis, n_hmm);
    for t in 0..t_len {
        for s in 0..n_hmm {
            let i = t * n_hmm + s;
            visit(Marginal::State {
                t,
                s,
                p: (alpha[i] + beta[i] - chain_ll).exp(),
            });
        }
    }
    for t in 0..t_len - 1 {
        for r in 0..n_hmm {
            let a = alpha[t * n_hmm + r];
            for s in 0..n_hmm {
                let j = (t + 1) * n_hmm + s;
                let lp = a + chain.log_transition(r, s) + emis[j] + beta[j] - chain_ll;
                visit(Marginal::Pair { t, r, s, p: lp.exp() });
            }
        }
    }
}

/// Log-likelihood of a multiset sequence under one mixture state, with the
/// smoothed forward–backward posterior over HMM state paths.
///
/// The returned log-likelihood includes the Poisson sequence-length term; the
/// posterior's `chain_log_lik` excludes it.
pub fn hmm_forward(
    seq: &[Vec<usize>],
    seq_state: &HmmSeqState,
    emissions: &HmmEmission,
) -> Result<(f64, HmmPosterior)> {
    let n_hmm = emissions.n_hmm_states();
    if seq_state.state_chain.len() != n_hmm {
        return Err(Error::DimensionMismatch(format!(
            "state chain over {} states, emission table has {n_hmm}",
            seq_state.state_chain.len()
        )));
    }
    let emis = emissions.log_densities(seq)?;
    let (alpha, chain_ll) = forward(&seq_state.state_chain, &emis, n_hmm);
    let t_len = seq.len();
    let mut state_marginals = vec![vec![0.0; n_hmm]; t_len];
    let mut transition_marginals = vec![vec![0.0; n_hmm * n_hmm]; t_len.saturating_sub(1)];
    visit_marginals(
        &seq_state.state_chain,
        &emis,
        &alpha,
        chain_ll,
        n_hmm,
        |m| match m {
            Marginal::State { t, s, p } => state_marginals[t][s] = p,
            Marginal::Pair { t, r, s, p } => transition_marginals[t][r * n_hmm + s] = p,
        },
    );
    let log_lik = seq_state.length.log_pmf(t_len) + chain_ll;
    Ok((
        log_lik,
        HmmPosterior {
            chain_log_lik: chain_ll,
            state_marginals,
            transition_marginals,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HmmMixtureDoc")]
pub struct HmmMixture {
    emission: HmmEmission,
    states: Vec<HmmSeqState>,
}

#[derive(Deserialize)]
struct HmmMixtureDoc {
    emission: HmmEmission,
    states: Vec<HmmSeqState>,
}

impl TryFrom<HmmMixtureDoc> for HmmMixture {
    type Error = Error;

    fn try_from(doc: HmmMixtureDoc) -> Result<Self> {
        Self::new(doc.emission, doc.states)
    }
}

/// Emission table plus one forward pass per mixture state.
pub struct HmmCache {
    emis: Vec<f64>,
    alphas: Vec<Vec<f64>>,
    chain_lls: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmmStats {
    length: Vec<PoissonStats>,
    chain: Vec<MarkovChainStats>,
    count: Vec<PoissonStats>,
    items: Vec<CategoricalStats>,
}

impl Merge for HmmStats {
    fn merge(&mut self, other: &Self) {
        for (a, b) in self.length.iter_mut().zip(&other.length) {
            a.merge(b);
        }
        for (a, b) in self.chain.iter_mut().zip(&other.chain) {
            a.merge(b);
        }
        for (a, b) in self.count.iter_mut().zip(&other.count) {
            a.merge(b);
        }
        for (a, b) in self.items.iter_mut().zip(&other.items) {
            a.merge(b);
        }
    }
}

impl HmmMixture {
    pub fn new(emission: HmmEmission, states: Vec<HmmSeqState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidParameter("hmm mixture needs at least one state".into()));
        }
        let n_hmm = emission.n_hmm_states();
        if states.iter().any(|s| s.state_chain.len() != n_hmm) {
            return Err(Error::DimensionMismatch(format!(
                "every state chain must range over the {n_hmm} HMM states"
            )));
        }
        Ok(Self { emission, states })
    }

    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_hmm: usize,
        vocab: usize,
        length_rate: f64,
        count_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let emission = HmmEmission::new(
            (0..n_hmm)
                .map(|_| {
                    Ok(HmmEmissionState {
                        count: PoissonDist::new(count_rate.max(RATE_FLOOR))?,
                        items: CategoricalDist::new(dirichlet_one(vocab, rng))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        )?;
        let states = (0..n_states)
            .map(|_| {
                let initial = CategoricalDist::new(dirichlet_one(n_hmm, rng))?;
                let rows = (0..n_hmm)
                    .map(|_| CategoricalDist::new(dirichlet_one(n_hmm, rng)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(HmmSeqState {
                    length: PoissonDist::new(length_rate.max(RATE_FLOOR))?,
                    state_chain: MarkovChainDist::new(initial, rows)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(emission, states)
    }

    pub fn emission(&self) -> &HmmEmission {
        &self.emission
    }

    pub fn emission_mut(&mut self) -> &mut HmmEmission {
        &mut self.emission
    }

    pub fn states(&self) -> &[HmmSeqState] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &HmmSeqState {
        &self.states[k]
    }

    pub fn n_hmm_states(&self) -> usize {
        self.emission.n_hmm_states()
    }

    pub fn vocab_size(&self) -> usize {
        self.emission.vocab_size()
    }

    /// Forward–backward for mixture state `k`.
    pub fn posterior(&self, seq: &[Vec<usize>], k: usize) -> Result<(f64, HmmPosterior)> {
        hmm_forward(seq, &self.states[k], &self.emission)
    }

    /// Reorders mixture states: new state `i` is old state `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            emission: self.emission.clone(),
            states: order.iter().map(|&k| self.states[k].clone()).collect(),
        }
    }

    /// Relabels HMM states: new HMM state `i` is old HMM state `order[i]`.
    pub fn relabel_hmm_states(&self, order: &[usize]) -> Self {
        Self {
            emission: HmmEmission {
                states: order.iter().map(|&s| self.emission.states[s].clone()).collect(),
            },
            states: self
                .states
                .iter()
                .map(|st| HmmSeqState {
                    length: st.length,
                    state_chain: st.state_chain.permuted(order),
                })
                .collect(),
        }
    }

    fn accumulate_marginals(
        &self,
        k: usize,
        w: f64,
        seq: &[Vec<usize>],
        emis: &[f64],
        alpha: &[f64],
        chain_ll: f64,
        stats: &mut HmmStats,
    ) {
        let n_hmm = self.n_hmm_states();
        let HmmStats {
            chain,
            count,
            items,
            ..
        } = stats;
        let chain_stats = &mut chain[k];
        visit_marginals(
            &self.states[k].state_chain,
            emis,
            alpha,
            chain_ll,
            n_hmm,
            |m| match m {
                Marginal::State { t, s, p } => {
                    let ws = w * p;
                    if t == 0 {
                        chain_stats.add_initial(s, ws);
                    }
                    count[s].add(seq[t].len(), ws);
                    for &i in &seq[t] {
                        items[s].add(i, ws);
                    }
                }
                Marginal::Pair { r, s, p, .. } => chain_stats.add_transition(r, s, w * p),
            },
        );
    }
}

impl SubModel for HmmMixture {
    type Obs = [Vec<usize>];
    type Cache = HmmCache;
    type Stats = HmmStats;

    fn n_states(&self) -> usize {
        self.states.len()
    }

    fn evaluate(&self, obs: &[Vec<usize>]) -> Result<(Vec<f64>, HmmCache)> {
        let n_hmm = self.n_hmm_states();
        let emis = self.emission.log_densities(obs)?;
        let mut alphas = Vec::with_capacity(self.states.len());
        let mut chain_lls = Vec::with_capacity(self.states.len());
        let mut lls = Vec::with_capacity(self.states.len());
        for st in &self.states {
            let (alpha, chain_ll) = forward(&st.state_chain, &emis, n_hmm);
            lls.push(st.length.log_pmf(obs.len()) + chain_ll);
            alphas.push(alpha);
            chain_lls.push(chain_ll);
        }
        Ok((
            lls,
            HmmCache {
                emis,
                alphas,
                chain_lls,
            },
        ))
    }

    fn new_stats(&self) -> HmmStats {
        let (k, s) = (self.states.len(), self.n_hmm_states());
        HmmStats {
            length: vec![PoissonStats::default(); k],
            chain: vec![MarkovChainStats::new(s); k],
            count: vec![PoissonStats::default(); s],
            items: vec![CategoricalStats::new(self.vocab_size()); s],
        }
    }

    fn accumulate(&self, obs: &[Vec<usize>], cache: &HmmCache, state_weights: &[f64], stats: &mut HmmStats) {
        for (k, &w) in state_weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            stats.length[k].add(obs.len(), w);
            self.accumulate_marginals(
                k,
                w,
                obs,
                &cache.emis,
                &cache.alphas[k],
                cache.chain_lls[k],
                stats,
            );
        }
    }

    fn accumulate_random(
        &self,
        obs: &[Vec<usize>],
        state_weights: &[f64],
        rng: &mut dyn rand::RngCore,
        stats: &mut HmmStats,
    ) {
        let n_hmm = self.n_hmm_states();
        let marginals: Vec<Vec<f64>> = obs.iter().map(|_| dirichlet_one(n_hmm, rng)).collect();
        for (k, &w) in state_weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            stats.length[k].add(obs.len(), w);
            for (t, g) in marginals.iter().enumerate() {
                for (s, &p) in g.iter().enumerate() {
                    if t == 0 {
                        stats.chain[k].add_initial(s, w * p);
                    }
                    stats.count[s].add(obs[t].len(), w * p);
                    for &i in &obs[t] {
                        stats.items[s].add(i, w * p);
                    }
                }
            }
            for pair in marginals.windows(2) {
                for r in 0..n_hmm {
                    for s in 0..n_hmm {
                        stats.chain[k].add_transition(r, s, w * pair[0][r] * pair[1][s]);
                    }
                }
            }
        }
    }

    fn m_step(&self, stats: &HmmStats) -> Result<Self> {
        let emission = HmmEmission::new(
            self.emission
                .states
                .iter()
                .enumerate()
                .map(|(s, prev)| {
                    Ok(HmmEmissionState {
                        count: or_keep(stats.count[s].fit(), &prev.count)?,
                        items: or_keep(stats.items[s].fit(), &prev.items)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        )?;
        let states = self
            .states
            .iter()
            .enumerate()
            .map(|(k, prev)| {
                Ok(HmmSeqState {
                    length: or_keep(stats.length[k].fit(), &prev.length)?,
                    state_chain: or_keep(
                        stats.chain[k].fit(Some(&prev.state_chain)),
                        &prev.state_chain,
                    )?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { emission, states })
    }
}

impl HmmSeqState {
    /// Draws a sequence and its HMM state path.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        emission: &HmmEmission,
        rng: &mut R,
    ) -> (Vec<Vec<usize>>, Vec<usize>) {
        let n = self.length.sample(rng);
        let path = self.state_chain.sample_path(n, rng);
        let seq = path.iter().map(|&s| emission.state(s).sample(rng)).collect();
        (seq, path)
    }
}
