//! The layered episode model.
//!
//! A top-layer categorical state `z` conditions the three scalars (age, sex,
//! death) and the mixing weights of six stream sub-models. Given `z` every
//! factor is independent, so an episode's likelihood is
//! `Σ_z p_z · f(scalars | z) · Π_x Σ_k p_{z,k} f(stream_x | k)`.

mod em;
mod params;
mod sample;

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::distributions::{
    BernoulliDist, CategoricalDist, QuantizedGaussianDist, DEFAULT_AGE_SUPPORT,
};
use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::submodels::{CollectionPool, HmmMixture, MarkovMixture, SubModel};

pub use em::{DataRates, FitConfig, FitReport, Responsibilities, ScalarMask, SufficientStats};
pub use params::{
    bic, bic_value, collection_params, hmm_params, markov_params, param_count, ParamConvention,
};
pub use sample::LatentTrace;

/// The six token streams of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Beds,
    AdmissionDx,
    DischargeDx,
    Labs,
    Neuro,
    Meds,
}

impl Stream {
    pub const ALL: [Stream; 6] = [
        Stream::Beds,
        Stream::AdmissionDx,
        Stream::DischargeDx,
        Stream::Labs,
        Stream::Neuro,
        Stream::Meds,
    ];

    pub const HMM: [Stream; 3] = [Stream::Labs, Stream::Neuro, Stream::Meds];

    pub fn name(self) -> &'static str {
        match self {
            Stream::Beds => "beds",
            Stream::AdmissionDx => "admission_dx",
            Stream::DischargeDx => "discharge_dx",
            Stream::Labs => "labs",
            Stream::Neuro => "neuro",
            Stream::Meds => "meds",
        }
    }

    pub fn parse(name: &str) -> Option<Stream> {
        Stream::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn is_hmm(self) -> bool {
        matches!(self, Stream::Labs | Stream::Neuro | Stream::Meds)
    }

    pub fn is_diagnoses(self) -> bool {
        matches!(self, Stream::AdmissionDx | Stream::DischargeDx)
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per stream.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamMap<T> {
    pub beds: T,
    pub admission_dx: T,
    pub discharge_dx: T,
    pub labs: T,
    pub neuro: T,
    pub meds: T,
}

impl<T> StreamMap<T> {
    pub fn from_fn(mut f: impl FnMut(Stream) -> T) -> Self {
        Self {
            beds: f(Stream::Beds),
            admission_dx: f(Stream::AdmissionDx),
            discharge_dx: f(Stream::DischargeDx),
            labs: f(Stream::Labs),
            neuro: f(Stream::Neuro),
            meds: f(Stream::Meds),
        }
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(Stream) -> Result<T, E>) -> Result<Self, E> {
        Ok(Self {
            beds: f(Stream::Beds)?,
            admission_dx: f(Stream::AdmissionDx)?,
            discharge_dx: f(Stream::DischargeDx)?,
            labs: f(Stream::Labs)?,
            neuro: f(Stream::Neuro)?,
            meds: f(Stream::Meds)?,
        })
    }
}

impl<T> Index<Stream> for StreamMap<T> {
    type Output = T;

    fn index(&self, s: Stream) -> &T {
        match s {
            Stream::Beds => &self.beds,
            Stream::AdmissionDx => &self.admission_dx,
            Stream::DischargeDx => &self.discharge_dx,
            Stream::Labs => &self.labs,
            Stream::Neuro => &self.neuro,
            Stream::Meds => &self.meds,
        }
    }
}

impl<T> IndexMut<Stream> for StreamMap<T> {
    fn index_mut(&mut self, s: Stream) -> &mut T {
        match s {
            Stream::Beds => &mut self.beds,
            Stream::AdmissionDx => &mut self.admission_dx,
            Stream::DischargeDx => &mut self.discharge_dx,
            Stream::Labs => &mut self.labs,
            Stream::Neuro => &mut self.neuro,
            Stream::Meds => &mut self.meds,
        }
    }
}

/// One hospitalization episode with token ids already resolved.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Episode {
    pub age: Option<i64>,
    pub sex: Option<bool>,
    pub death: Option<bool>,
    pub beds: Vec<usize>,
    pub admission_dx: Vec<usize>,
    pub discharge_dx: Vec<usize>,
    pub labs: Vec<Vec<usize>>,
    pub neuro: Vec<Vec<usize>>,
    pub meds: Vec<Vec<usize>>,
}

impl Episode {
    /// Item sequence of the beds or a diagnoses stream.
    pub fn flat(&self, stream: Stream) -> Option<&[usize]> {
        match stream {
            Stream::Beds => Some(&self.beds),
            Stream::AdmissionDx => Some(&self.admission_dx),
            Stream::DischargeDx => Some(&self.discharge_dx),
            _ => None,
        }
    }

    /// Multiset sequence of an HMM stream.
    pub fn nested(&self, stream: Stream) -> Option<&[Vec<usize>]> {
        match stream {
            Stream::Labs => Some(&self.labs),
            Stream::Neuro => Some(&self.neuro),
            Stream::Meds => Some(&self.meds),
            _ => None,
        }
    }

    /// Number of items (flat streams) or timepoints (HMM streams).
    pub fn stream_len(&self, stream: Stream) -> usize {
        self.flat(stream)
            .map(<[usize]>::len)
            .or_else(|| self.nested(stream).map(<[Vec<usize>]>::len))
            .unwrap_or(0)
    }
}

/// Sizes of every latent layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Top-layer states.
    pub n_top: usize,
    /// Shared admission/discharge diagnoses pool.
    pub n_diagnoses: usize,
    pub n_beds: usize,
    pub n_labs: usize,
    pub n_neuro: usize,
    pub n_meds: usize,
    pub hmm_labs: usize,
    pub hmm_neuro: usize,
    pub hmm_meds: usize,
}

impl Hyperparams {
    /// All layers of size one.
    pub fn unit() -> Self {
        Self {
            n_top: 1,
            n_diagnoses: 1,
            n_beds: 1,
            n_labs: 1,
            n_neuro: 1,
            n_meds: 1,
            hmm_labs: 1,
            hmm_neuro: 1,
            hmm_meds: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.n_top,
            self.n_diagnoses,
            self.n_beds,
            self.n_labs,
            self.n_neuro,
            self.n_meds,
            self.hmm_labs,
            self.hmm_neuro,
            self.hmm_meds,
        ];
        if all.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter(
                "every hyperparameter must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn sub_states(&self, stream: Stream) -> usize {
        match stream {
            Stream::Beds => self.n_beds,
            Stream::AdmissionDx | Stream::DischargeDx => self.n_diagnoses,
            Stream::Labs => self.n_labs,
            Stream::Neuro => self.n_neuro,
            Stream::Meds => self.n_meds,
        }
    }

    pub fn hmm_states(&self, stream: Stream) -> Option<usize> {
        match stream {
            Stream::Labs => Some(self.hmm_labs),
            Stream::Neuro => Some(self.hmm_neuro),
            Stream::Meds => Some(self.hmm_meds),
            _ => None,
        }
    }
}

/// Vocabulary sizes. Admission and discharge diagnoses share one vocabulary
/// because they share one collection pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSizes {
    pub beds: usize,
    pub diagnoses: usize,
    pub labs: usize,
    pub neuro: usize,
    pub meds: usize,
}

impl VocabSizes {
    pub fn of(&self, stream: Stream) -> usize {
        match stream {
            Stream::Beds => self.beds,
            Stream::AdmissionDx | Stream::DischargeDx => self.diagnoses,
            Stream::Labs => self.labs,
            Stream::Neuro => self.neuro,
            Stream::Meds => self.meds,
        }
    }
}

/// Age, sex and death distributions of one top-layer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopScalars {
    pub age: QuantizedGaussianDist,
    /// Probability of sex = 1.
    pub sex: BernoulliDist,
    /// Probability of death = 1.
    pub death: BernoulliDist,
}

/// Conditional distribution of a stream's sub-model state given the top state;
/// one row per top state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CategoricalDist>", into = "Vec<CategoricalDist>")]
pub struct MixingMatrix {
    rows: Vec<CategoricalDist>,
}

impl TryFrom<Vec<CategoricalDist>> for MixingMatrix {
    type Error = Error;

    fn try_from(rows: Vec<CategoricalDist>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<MixingMatrix> for Vec<CategoricalDist> {
    fn from(m: MixingMatrix) -> Self {
        m.rows
    }
}

impl MixingMatrix {
    pub fn new(rows: Vec<CategoricalDist>) -> Result<Self> {
        let width = rows
            .first()
            .map(CategoricalDist::len)
            .ok_or_else(|| Error::InvalidParameter("mixing matrix needs at least one row".into()))?;
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::DimensionMismatch("ragged mixing matrix".into()));
        }
        Ok(Self { rows })
    }

    pub fn uniform(n_top: usize, n_states: usize) -> Self {
        Self {
            rows: vec![CategoricalDist::uniform(n_states); n_top],
        }
    }

    pub fn rows(&self) -> &[CategoricalDist] {
        &self.rows
    }

    pub fn row(&self, z: usize) -> &CategoricalDist {
        &self.rows[z]
    }

    pub fn n_top(&self) -> usize {
        self.rows.len()
    }

    pub fn n_states(&self) -> usize {
        self.rows[0].len()
    }

    #[inline]
    pub fn prob(&self, z: usize, k: usize) -> f64 {
        self.rows[z].prob(k)
    }
}

/// The full trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDoc")]
pub struct EpisodeModel {
    hyper: Hyperparams,
    top: CategoricalDist,
    scalars: Vec<TopScalars>,
    mixing: StreamMap<MixingMatrix>,
    diagnoses: CollectionPool,
    beds: MarkovMixture,
    labs: HmmMixture,
    neuro: HmmMixture,
    meds: HmmMixture,
}

#[derive(Deserialize)]
struct ModelDoc {
    hyper: Hyperparams,
    top: CategoricalDist,
    scalars: Vec<TopScalars>,
    mixing: StreamMap<MixingMatrix>,
    diagnoses: CollectionPool,
    beds: MarkovMixture,
    labs: HmmMixture,
    neuro: HmmMixture,
    meds: HmmMixture,
}

impl TryFrom<ModelDoc> for EpisodeModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        let model = Self::new(
            doc.top,
            doc.scalars,
            doc.mixing,
            doc.diagnoses,
            doc.beds,
            doc.labs,
            doc.neuro,
            doc.meds,
        )?;
        if model.hyper != doc.hyper {
            return Err(Error::DimensionMismatch(
                "declared hyperparameters disagree with parameter shapes".into(),
            ));
        }
        Ok(model)
    }
}

/// Per-stream, per-sub-state log-likelihoods of one episode plus the HMM
/// forward caches needed to accumulate statistics afterwards.
pub(crate) struct EpisodeEval {
    pub(crate) stream_ll: StreamMap<Vec<f64>>,
    pub(crate) labs: crate::submodels::HmmCache,
    pub(crate) neuro: crate::submodels::HmmCache,
    pub(crate) meds: crate::submodels::HmmCache,
}

impl EpisodeModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        top: CategoricalDist,
        scalars: Vec<TopScalars>,
        mixing: StreamMap<MixingMatrix>,
        diagnoses: CollectionPool,
        beds: MarkovMixture,
        labs: HmmMixture,
        neuro: HmmMixture,
        meds: HmmMixture,
    ) -> Result<Self> {
        let hyper = Hyperparams {
            n_top: top.len(),
            n_diagnoses: diagnoses.n_states(),
            n_beds: beds.n_states(),
            n_labs: labs.n_states(),
            n_neuro: neuro.n_states(),
            n_meds: meds.n_states(),
            hmm_labs: labs.n_hmm_states(),
            hmm_neuro: neuro.n_hmm_states(),
            hmm_meds: meds.n_hmm_states(),
        };
        if scalars.len() != hyper.n_top {
            return Err(Error::DimensionMismatch(format!(
                "{} scalar blocks for {} top states",
                scalars.len(),
                hyper.n_top
            )));
        }
        for stream in Stream::ALL {
            let m = &mixing[stream];
            if m.n_top() != hyper.n_top || m.n_states() != hyper.sub_states(stream) {
                return Err(Error::DimensionMismatch(format!(
                    "{stream} mixing matrix is {}x{}, expected {}x{}",
                    m.n_top(),
                    m.n_states(),
                    hyper.n_top,
                    hyper.sub_states(stream)
                )));
            }
        }
        Ok(Self {
            hyper,
            top,
            scalars,
            mixing,
            diagnoses,
            beds,
            labs,
            neuro,
            meds,
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn n_top(&self) -> usize {
        self.hyper.n_top
    }

    pub fn vocab_sizes(&self) -> VocabSizes {
        VocabSizes {
            beds: self.beds.vocab_size(),
            diagnoses: self.diagnoses.vocab_size(),
            labs: self.labs.vocab_size(),
            neuro: self.neuro.vocab_size(),
            meds: self.meds.vocab_size(),
        }
    }

    /// Top-layer weights `p_z`.
    pub fn top_weights(&self) -> &CategoricalDist {
        &self.top
    }

    pub fn scalars(&self, z: usize) -> &TopScalars {
        &self.scalars[z]
    }

    pub fn mixing(&self, stream: Stream) -> &MixingMatrix {
        &self.mixing[stream]
    }

    pub fn diagnoses(&self) -> &CollectionPool {
        &self.diagnoses
    }

    pub fn beds(&self) -> &MarkovMixture {
        &self.beds
    }

    pub fn hmm(&self, stream: Stream) -> Option<&HmmMixture> {
        match stream {
            Stream::Labs => Some(&self.labs),
            Stream::Neuro => Some(&self.neuro),
            Stream::Meds => Some(&self.meds),
            _ => None,
        }
    }

    pub fn age_support(&self) -> (i64, i64) {
        self.scalars
            .first()
            .map(|s| s.age.support())
            .unwrap_or(DEFAULT_AGE_SUPPORT)
    }

    /// Stream sub-models are scored once per episode; each top state then only
    /// needs a log-sum-exp over its mixing row.
    pub(crate) fn evaluate(&self, e: &Episode) -> Result<EpisodeEval> {
        let (beds, ()) = self.beds.evaluate(&e.beds).map_err(|x| x.in_stream(Stream::Beds))?;
        let (adm, ()) = self
            .diagnoses
            .evaluate(&e.admission_dx)
            .map_err(|x| x.in_stream(Stream::AdmissionDx))?;
        let (dis, ()) = self
            .diagnoses
            .evaluate(&e.discharge_dx)
            .map_err(|x| x.in_stream(Stream::DischargeDx))?;
        let (labs_ll, labs) = self.labs.evaluate(&e.labs).map_err(|x| x.in_stream(Stream::Labs))?;
        let (neuro_ll, neuro) = self.neuro.evaluate(&e.neuro).map_err(|x| x.in_stream(Stream::Neuro))?;
        let (meds_ll, meds) = self.meds.evaluate(&e.meds).map_err(|x| x.in_stream(Stream::Meds))?;
        Ok(EpisodeEval {
            stream_ll: StreamMap {
                beds,
                admission_dx: adm,
                discharge_dx: dis,
                labs: labs_ll,
                neuro: neuro_ll,
                meds: meds_ll,
            },
            labs,
            neuro,
            meds,
        })
    }

    /// Log-density of the observed scalars under top state `z`, restricted to
    /// the scalars enabled in `mask`.
    pub(crate) fn scalar_log_lik(&self, e: &Episode, z: usize, mask: ScalarMask) -> Result<f64> {
        let s = &self.scalars[z];
        let mut total = 0.0;
        if mask.age {
            if let Some(age) = e.age {
                total += s.age.log_pmf(age)?;
            }
        }
        if mask.sex {
            if let Some(sex) = e.sex {
                total += s.sex.log_pmf(sex);
            }
        }
        if mask.death {
            if let Some(death) = e.death {
                total += s.death.log_pmf(death);
            }
        }
        Ok(total)
    }

    /// `log Σ_k p_{z,k} f(stream | k)` for every top state.
    pub(crate) fn stream_given_top(&self, stream: Stream, stream_ll: &[f64]) -> Vec<f64> {
        let mut terms = vec![0.0; stream_ll.len()];
        self.mixing[stream]
            .rows()
            .iter()
            .map(|row| {
                for (k, t) in terms.iter_mut().enumerate() {
                    *t = row.log_probs()[k] + stream_ll[k];
                }
                log_sum_exp(&terms)
            })
            .collect()
    }

    /// `log f(e | Z = z)` with every observed scalar included.
    pub fn episode_log_lik_given_top(&self, e: &Episode, z: usize) -> Result<f64> {
        if z >= self.n_top() {
            return Err(Error::InvalidParameter(format!(
                "top state {z} out of range for {} states",
                self.n_top()
            )));
        }
        Ok(self.log_lik_given_top_all(e, ScalarMask::ALL)?[z])
    }

    pub(crate) fn log_lik_given_top_all(&self, e: &Episode, mask: ScalarMask) -> Result<Vec<f64>> {
        let eval = self.evaluate(e)?;
        self.given_top_from_eval(e, &eval, mask)
    }

    pub(crate) fn given_top_from_eval(
        &self,
        e: &Episode,
        eval: &EpisodeEval,
        mask: ScalarMask,
    ) -> Result<Vec<f64>> {
        let mut totals = (0..self.n_top())
            .map(|z| self.scalar_log_lik(e, z, mask))
            .collect::<Result<Vec<_>>>()?;
        for stream in Stream::ALL {
            for (t, v) in totals
                .iter_mut()
                .zip(self.stream_given_top(stream, &eval.stream_ll[stream]))
            {
                *t += v;
            }
        }
        Ok(totals)
    }

    /// Posterior over top states given only the scalars in `scalars` and the
    /// streams flagged in `streams`; the contents of other parts are ignored.
    pub fn top_posterior(
        &self,
        e: &Episode,
        scalars: ScalarMask,
        streams: &StreamMap<bool>,
    ) -> Result<Vec<f64>> {
        let mut totals = (0..self.n_top())
            .map(|z| Ok(self.top.log_probs()[z] + self.scalar_log_lik(e, z, scalars)?))
            .collect::<Result<Vec<_>>>()?;
        for stream in Stream::ALL {
            if !streams[stream] {
                continue;
            }
            let ll = match stream {
                Stream::Beds => self.beds.evaluate(&e.beds)?.0,
                Stream::AdmissionDx => self.diagnoses.evaluate(&e.admission_dx)?.0,
                Stream::DischargeDx => self.diagnoses.evaluate(&e.discharge_dx)?.0,
                s => {
                    let h = self.hmm(s).expect("hmm stream");
                    h.evaluate(e.nested(s).expect("nested stream"))?.0
                }
            };
            for (t, v) in totals.iter_mut().zip(self.stream_given_top(stream, &ll)) {
                *t += v;
            }
        }
        let mut gamma = Vec::new();
        let lse = crate::math::normalize_log_weights(&totals, &mut gamma);
        if !lse.is_finite() {
            return Err(Error::InvalidParameter("episode has zero likelihood".into()));
        }
        Ok(gamma)
    }

    /// `log Σ_z p_z f(e | Z = z)` with every observed scalar included.
    pub fn episode_log_lik(&self, e: &Episode) -> Result<f64> {
        self.episode_log_lik_masked(e, ScalarMask::ALL)
    }

    pub fn episode_log_lik_masked(&self, e: &Episode, mask: ScalarMask) -> Result<f64> {
        let given = self.log_lik_given_top_all(e, mask)?;
        let joint: Vec<f64> = given
            .iter()
            .zip(self.top.log_probs())
            .map(|(l, p)| l + p)
            .collect();
        Ok(log_sum_exp(&joint))
    }

    /// Sum of episode log-likelihoods, evaluated in parallel with an
    /// order-independent result.
    pub fn total_log_lik(&self, data: &[Episode]) -> Result<f64> {
        use rayon::prelude::*;
        let per: Vec<f64> = data
            .par_iter()
            .map(|e| self.episode_log_lik(e))
            .collect::<Result<Vec<_>>>()?;
        Ok(per.iter().sum())
    }

    /// Reorders top states so that new state `i` is old state `order[i]`;
    /// every conditional parameter is permuted consistently.
    pub fn permute_top(&self, order: &[usize]) -> Result<Self> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.n_top()).collect::<Vec<_>>() {
            return Err(Error::InvalidParameter("not a permutation of the top states".into()));
        }
        let mut out = self.clone();
        out.top = self.top.permuted(order);
        out.scalars = order.iter().map(|&z| self.scalars[z].clone()).collect();
        out.mixing = StreamMap::from_fn(|s| MixingMatrix {
            rows: order.iter().map(|&z| self.mixing[s].rows[z].clone()).collect(),
        });
        Ok(out)
    }

    /// Top states sorted by descending weight (stable, so ties keep their order).
    pub fn sorted_by_weight(&self) -> Self {
        let mut order: Vec<usize> = (0..self.n_top()).collect();
        order.sort_by(|&a, &b| self.top.prob(b).total_cmp(&self.top.prob(a)));
        self.permute_top(&order).expect("sort yields a permutation")
    }

    /// Marginal prevalence of each sub-model state: `Σ_z p_z p_{z,k}`.
    pub fn state_prevalence(&self, stream: Stream) -> Vec<f64> {
        let m = &self.mixing[stream];
        (0..m.n_states())
            .map(|k| (0..self.n_top()).map(|z| self.top.prob(z) * m.prob(z, k)).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests;
