//! Free-parameter counts and BIC.

use serde::{Deserialize, Serialize};

use super::{Episode, EpisodeModel, Hyperparams, Stream, VocabSizes};
use crate::error::{Error, Result};

/// How parameters are counted.
///
/// `Shared` counts what this implementation estimates: one diagnoses pool and
/// one emission table (items plus a per-timepoint count rate) per HMM stream.
/// `PaperTable` applies the per-element table formulas verbatim, which count the
/// diagnoses pool once per stream and HMM emissions once per mixture state
/// (items only).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamConvention {
    #[default]
    Shared,
    PaperTable,
}

impl ParamConvention {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "shared" => Some(Self::Shared),
            "paper-table" => Some(Self::PaperTable),
            _ => None,
        }
    }
}

/// `(1 + C)·K` per stream using the pool (counted twice under `PaperTable`).
pub fn collection_params(k: usize, vocab: usize, convention: ParamConvention) -> usize {
    let per = (1 + vocab) * k;
    match convention {
        ParamConvention::Shared => per,
        ParamConvention::PaperTable => 2 * per,
    }
}

/// `(1 + C + C²)·K`.
pub fn markov_params(k: usize, vocab: usize) -> usize {
    (1 + vocab + vocab * vocab) * k
}

pub fn hmm_params(k: usize, n_hmm: usize, vocab: usize, convention: ParamConvention) -> usize {
    let chain = 1 + n_hmm + n_hmm * n_hmm;
    match convention {
        ParamConvention::Shared => chain * k + n_hmm * (1 + vocab),
        ParamConvention::PaperTable => (chain + n_hmm * vocab) * k,
    }
}

pub fn param_count(hp: &Hyperparams, vocab: &VocabSizes, convention: ParamConvention) -> usize {
    let z = hp.n_top;
    let mixing: usize = Stream::ALL.iter().map(|&s| z * hp.sub_states(s)).sum();
    let scalars = 4 * z;
    let hmm: usize = Stream::HMM
        .iter()
        .map(|&s| {
            hmm_params(
                hp.sub_states(s),
                hp.hmm_states(s).expect("hmm stream"),
                vocab.of(s),
                convention,
            )
        })
        .sum();
    z + mixing
        + scalars
        + collection_params(hp.n_diagnoses, vocab.diagnoses, convention)
        + markov_params(hp.n_beds, vocab.beds)
        + hmm
}

/// `d·ln N − 2·log_lik`.
pub fn bic_value(n_params: usize, n_episodes: usize, log_lik: f64) -> f64 {
    n_params as f64 * (n_episodes as f64).ln() - 2.0 * log_lik
}

pub fn bic(model: &EpisodeModel, data: &[Episode], convention: ParamConvention) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = param_count(model.hyperparams(), &model.vocab_sizes(), convention);
    Ok(bic_value(d, data.len(), model.total_log_lik(data)?))
}
