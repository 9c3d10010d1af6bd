//! Generator models for synthetic corpora: fully random parameters, and
//! well-separated models whose sub-states emit from disjoint token blocks.

use rand::Rng;

use crate::distributions::{
    BernoulliDist, CategoricalDist, MarkovChainDist, PoissonDist, QuantizedGaussianDist,
};
use crate::error::{Error, Result};
use crate::model::{DataRates, EpisodeModel, Hyperparams, MixingMatrix, StreamMap, TopScalars, VocabSizes};
use crate::submodels::{
    CollectionPool, CollectionState, HmmEmission, HmmEmissionState, HmmMixture, HmmSeqState,
    MarkovMixture, MarkovSeqState,
};

fn dirichlet<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<CategoricalDist> {
    CategoricalDist::new(crate::submodels::dirichlet_one(len, rng))
}

/// Every parameter drawn at random: Dirichlet(1) for categorical rows, uniform
/// age means over the support, variances in [25, 400], Bernoulli
/// probabilities in [0.05, 0.95], Poisson rates from `rates`.
pub fn random_model<R: Rng + ?Sized>(
    hp: &Hyperparams,
    vocab: &VocabSizes,
    rates: &DataRates,
    age_support: (i64, i64),
    rng: &mut R,
) -> Result<EpisodeModel> {
    hp.validate()?;
    let scalars = (0..hp.n_top)
        .map(|_| {
            let mean = rng.random_range(age_support.0 as f64..=age_support.1 as f64);
            Ok(TopScalars {
                age: QuantizedGaussianDist::new(
                    mean,
                    rng.random_range(25.0..400.0),
                    age_support.0,
                    age_support.1,
                )?,
                sex: BernoulliDist::new(rng.random_range(0.05..0.95))?,
                death: BernoulliDist::new(rng.random_range(0.05..0.95))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mixing = StreamMap::try_from_fn(|s| {
        MixingMatrix::new(
            (0..hp.n_top)
                .map(|_| dirichlet(hp.sub_states(s), rng))
                .collect::<Result<_>>()?,
        )
    })?;
    let rate = |r: f64, rng: &mut R| PoissonDist::new((r * rng.random_range(0.5..1.5)).max(1e-6));
    let diagnoses = CollectionPool::new(
        (0..hp.n_diagnoses)
            .map(|_| {
                Ok(CollectionState {
                    length: rate(rates.diagnoses, rng)?,
                    items: dirichlet(vocab.diagnoses, rng)?,
                })
            })
            .collect::<Result<_>>()?,
    )?;
    let beds = MarkovMixture::new(
        (0..hp.n_beds)
            .map(|_| {
                Ok(MarkovSeqState {
                    length: rate(rates.beds, rng)?,
                    chain: random_chain(vocab.beds, rng)?,
                })
            })
            .collect::<Result<_>>()?,
    )?;
    let mut hmm = |k: usize, s: usize, v: usize, (len, count): (f64, f64)| -> Result<HmmMixture> {
        let emission = HmmEmission::new(
            (0..s)
                .map(|_| {
                    Ok(HmmEmissionState {
                        count: rate(count, rng)?,
                        items: dirichlet(v, rng)?,
                    })
                })
                .collect::<Result<_>>()?,
        )?;
        let states = (0..k)
            .map(|_| {
                Ok(HmmSeqState {
                    length: rate(len, rng)?,
                    state_chain: random_chain(s, rng)?,
                })
            })
            .collect::<Result<_>>()?;
        HmmMixture::new(emission, states)
    };
    let labs = hmm(hp.n_labs, hp.hmm_labs, vocab.labs, rates.labs)?;
    let neuro = hmm(hp.n_neuro, hp.hmm_neuro, vocab.neuro, rates.neuro)?;
    let meds = hmm(hp.n_meds, hp.hmm_meds, vocab.meds, rates.meds)?;
    EpisodeModel::new(
        dirichlet(hp.n_top, rng)?,
        scalars,
        mixing,
        diagnoses,
        beds,
        labs,
        neuro,
        meds,
    )
}

pub fn random_chain<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<MarkovChainDist> {
    MarkovChainDist::new(
        dirichlet(len, rng)?,
        (0..len).map(|_| dirichlet(len, rng)).collect::<Result<_>>()?,
    )
}

/// Shape of a well-separated generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparatedSpec {
    pub top_weights: Vec<f64>,
    /// Sub-states per stream.
    pub n_sub: usize,
    /// HMM states per multiset stream.
    pub n_hmm: usize,
    /// Tokens owned by each sub-state (or HMM state).
    pub block: usize,
    /// Mass of a top state's preferred sub-state (`z mod n_sub`).
    pub mixing_peak: f64,
    pub rates: DataRates,
}

impl SeparatedSpec {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            n_top: self.top_weights.len(),
            n_diagnoses: self.n_sub,
            n_beds: self.n_sub,
            n_labs: self.n_sub,
            n_neuro: self.n_sub,
            n_meds: self.n_sub,
            hmm_labs: self.n_hmm,
            hmm_neuro: self.n_hmm,
            hmm_meds: self.n_hmm,
        }
    }

    pub fn vocab_sizes(&self) -> VocabSizes {
        let flat = self.n_sub * self.block;
        let nested = self.n_hmm * self.block;
        VocabSizes {
            beds: flat,
            diagnoses: flat,
            labs: nested,
            neuro: nested,
            meds: nested,
        }
    }
}

fn block_dist(len: usize, block: usize, owner: usize) -> Result<CategoricalDist> {
    let mut probs = vec![0.0; len];
    probs[owner * block..(owner + 1) * block].fill(1.0 / block as f64);
    CategoricalDist::new(probs)
}

fn peaked(len: usize, at: usize, peak: f64) -> Result<CategoricalDist> {
    if len == 1 {
        return Ok(CategoricalDist::uniform(1));
    }
    let rest = (1.0 - peak) / (len - 1) as f64;
    CategoricalDist::new((0..len).map(|i| if i == at { peak } else { rest }).collect())
}

/// A model whose top states differ in age (means spread over 25..85), sex and
/// death rates. Diagnosis sub-state `k` emits only from token block `k`; bed
/// sub-state `k` starts in block `k` and mostly steps `k + 1` beds forward.
/// HMM state `s` emits only from block `s`; mixture state `k` of an HMM stream
/// starts in HMM state `k mod n_hmm` and then cycles through the HMM states in
/// its own direction.
pub fn separated_model(spec: &SeparatedSpec) -> Result<EpisodeModel> {
    let n_top = spec.top_weights.len();
    if n_top == 0 || spec.n_sub == 0 || spec.n_hmm == 0 || spec.block == 0 {
        return Err(Error::InvalidParameter("separated model sizes must be positive".into()));
    }
    let vocab = spec.vocab_sizes();
    let scalars = (0..n_top)
        .map(|z| {
            let f = if n_top == 1 { 0.5 } else { z as f64 / (n_top - 1) as f64 };
            Ok(TopScalars {
                age: QuantizedGaussianDist::new(25.0 + 60.0 * f, 64.0, 0, 120)?,
                sex: BernoulliDist::new(0.2 + 0.6 * f)?,
                death: BernoulliDist::new(0.02 + 0.96 * f)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mixing = StreamMap::try_from_fn(|_| {
        MixingMatrix::new(
            (0..n_top)
                .map(|z| peaked(spec.n_sub, z % spec.n_sub, spec.mixing_peak))
                .collect::<Result<_>>()?,
        )
    })?;
    let r = &spec.rates;
    let diagnoses = CollectionPool::new(
        (0..spec.n_sub)
            .map(|k| {
                Ok(CollectionState {
                    length: PoissonDist::new(r.diagnoses)?,
                    items: block_dist(vocab.diagnoses, spec.block, k)?,
                })
            })
            .collect::<Result<_>>()?,
    )?;
    let beds = MarkovMixture::new(
        (0..spec.n_sub)
            .map(|k| {
                let rows = (0..vocab.beds)
                    .map(|i| peaked(vocab.beds, (i + 1 + k) % vocab.beds, 0.85))
                    .collect::<Result<_>>()?;
                Ok(MarkovSeqState {
                    length: PoissonDist::new(r.beds)?,
                    chain: MarkovChainDist::new(block_dist(vocab.beds, spec.block, k)?, rows)?,
                })
            })
            .collect::<Result<_>>()?,
    )?;
    let hmm = |(len, count): (f64, f64)| -> Result<HmmMixture> {
        let s = spec.n_hmm;
        let emission = HmmEmission::new(
            (0..s)
                .map(|h| {
                    Ok(HmmEmissionState {
                        count: PoissonDist::new(count)?,
                        items: block_dist(s * spec.block, spec.block, h)?,
                    })
                })
                .collect::<Result<_>>()?,
        )?;
        let states = (0..spec.n_sub)
            .map(|k| {
                let step = if k % 2 == 0 { 1 } else { s.saturating_sub(1).max(1) };
                let rows = (0..s)
                    .map(|h| peaked(s, (h + step) % s, 0.8))
                    .collect::<Result<_>>()?;
                Ok(HmmSeqState {
                    length: PoissonDist::new(len)?,
                    state_chain: MarkovChainDist::new(peaked(s, k % s, 0.9)?, rows)?,
                })
            })
            .collect::<Result<_>>()?;
        HmmMixture::new(emission, states)
    };
    EpisodeModel::new(
        CategoricalDist::new(spec.top_weights.clone())?,
        scalars,
        mixing,
        diagnoses,
        beds,
        hmm(r.labs)?,
        hmm(r.neuro)?,
        hmm(r.meds)?,
    )
}
