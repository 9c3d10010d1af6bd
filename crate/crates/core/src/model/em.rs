//! Expectation–maximization for the episode model.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Episode, EpisodeEval, EpisodeModel, Hyperparams, MixingMatrix, Stream, StreamMap, TopScalars, VocabSizes};
use crate::distributions::{
    BernoulliDist, BernoulliStats, CategoricalDist, CategoricalStats, GaussianStats,
    QuantizedGaussianDist,
};
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, normalize_log_weights};
use crate::rng::{derive_seed, rng_for, Domain};
use crate::submodels::{
    dirichlet_one, or_keep, CollectionPool, CollectionStats, HmmMixture, HmmPosterior, HmmStats,
    MarkovMixture, MarkovSeqStats, Merge, SubModel,
};

/// Episodes per work unit. Fixed so the reduction order never depends on the
/// number of threads.
const CHUNK: usize = 64;

/// Which observed scalars enter the likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalarMask {
    pub age: bool,
    pub sex: bool,
    pub death: bool,
}

impl ScalarMask {
    pub const ALL: ScalarMask = ScalarMask {
        age: true,
        sex: true,
        death: true,
    };
    pub const NONE: ScalarMask = ScalarMask {
        age: false,
        sex: false,
        death: false,
    };
}

impl Default for ScalarMask {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub seed: u64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    /// Scalars held out of the training likelihood are still estimated in the
    /// M-step from the responsibilities.
    pub scalars: ScalarMask,
    pub age_support: (i64, i64),
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_iters: 200,
            rel_tol: 1e-6,
            restarts: 1,
            scalars: ScalarMask::ALL,
            age_support: crate::distributions::DEFAULT_AGE_SUPPORT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Total training log-likelihood at each iteration of the selected restart.
    pub log_lik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub best_restart: usize,
    /// Final log-likelihood of each restart.
    pub restart_log_liks: Vec<f64>,
}

impl FitReport {
    pub fn final_log_lik(&self) -> f64 {
        self.log_lik_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

/// E-step output for one episode.
#[derive(Clone, Debug)]
pub struct Responsibilities {
    pub log_lik: f64,
    /// Posterior over top states.
    pub gamma: Vec<f64>,
    /// Joint posterior `w(z, k)` over top state and sub-model state, row-major
    /// `n_top × n_states` per stream.
    pub joint: StreamMap<Vec<f64>>,
    /// Forward–backward posteriors of each HMM stream, one per mixture state.
    pub hmm: StreamMap<Vec<HmmPosterior>>,
}

impl Responsibilities {
    pub fn joint_at(&self, stream: Stream, z: usize, k: usize, n_states: usize) -> f64 {
        self.joint[stream][z * n_states + k]
    }

    /// `Σ_z w(z, k)`.
    pub fn sub_state_posterior(&self, stream: Stream, n_states: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_states];
        for row in self.joint[stream].chunks(n_states) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w;
            }
        }
        out
    }
}

/// Merged weighted sufficient statistics of a corpus.
#[derive(Clone, Debug)]
pub struct SufficientStats {
    pub n_episodes: usize,
    pub log_lik: f64,
    top: CategoricalStats,
    age: Vec<GaussianStats>,
    sex: Vec<BernoulliStats>,
    death: Vec<BernoulliStats>,
    mixing: StreamMap<Vec<CategoricalStats>>,
    diagnoses: CollectionStats,
    beds: MarkovSeqStats,
    labs: HmmStats,
    neuro: HmmStats,
    meds: HmmStats,
}

impl Merge for SufficientStats {
    fn merge(&mut self, o: &Self) {
        self.n_episodes += o.n_episodes;
        self.log_lik += o.log_lik;
        self.top.merge(&o.top);
        for (a, b) in self.age.iter_mut().zip(&o.age) {
            a.merge(b);
        }
        for (a, b) in self.sex.iter_mut().zip(&o.sex) {
            a.merge(b);
        }
        for (a, b) in self.death.iter_mut().zip(&o.death) {
            a.merge(b);
        }
        for s in Stream::ALL {
            for (a, b) in self.mixing[s].iter_mut().zip(&o.mixing[s]) {
                a.merge(b);
            }
        }
        self.diagnoses.merge(&o.diagnoses);
        self.beds.merge(&o.beds);
        self.labs.merge(&o.labs);
        self.neuro.merge(&o.neuro);
        self.meds.merge(&o.meds);
    }
}

/// Posterior quantities shared by the public E-step and the training path.
struct EpisodePosterior {
    log_lik: f64,
    gamma: Vec<f64>,
    joint: StreamMap<Vec<f64>>,
}

impl EpisodeModel {
    pub fn new_stats(&self) -> SufficientStats {
        let n_top = self.n_top();
        SufficientStats {
            n_episodes: 0,
            log_lik: 0.0,
            top: CategoricalStats::new(n_top),
            age: vec![GaussianStats::default(); n_top],
            sex: vec![BernoulliStats::default(); n_top],
            death: vec![BernoulliStats::default(); n_top],
            mixing: StreamMap::from_fn(|s| {
                vec![CategoricalStats::new(self.hyper.sub_states(s)); n_top]
            }),
            diagnoses: self.diagnoses.new_stats(),
            beds: self.beds.new_stats(),
            labs: self.labs.new_stats(),
            neuro: self.neuro.new_stats(),
            meds: self.meds.new_stats(),
        }
    }

    fn posterior_from_eval(
        &self,
        e: &Episode,
        eval: &EpisodeEval,
        mask: ScalarMask,
    ) -> Result<EpisodePosterior> {
        let n_top = self.n_top();
        let mut per_top = (0..n_top)
            .map(|z| Ok(self.top.log_probs()[z] + self.scalar_log_lik(e, z, mask)?))
            .collect::<Result<Vec<f64>>>()?;
        let mut stream_terms: StreamMap<(Vec<f64>, Vec<f64>)> = StreamMap::default();
        for stream in Stream::ALL {
            let ll = &eval.stream_ll[stream];
            let k_len = ll.len();
            let mut terms = vec![0.0; n_top * k_len];
            let mut given = vec![0.0; n_top];
            for z in 0..n_top {
                let row = &mut terms[z * k_len..(z + 1) * k_len];
                let mix = self.mixing[stream].row(z).log_probs();
                for k in 0..k_len {
                    row[k] = mix[k] + ll[k];
                }
                given[z] = log_sum_exp(row);
                per_top[z] += given[z];
            }
            stream_terms[stream] = (terms, given);
        }
        let mut gamma = Vec::with_capacity(n_top);
        let log_lik = normalize_log_weights(&per_top, &mut gamma);
        if !log_lik.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "episode has log-likelihood {log_lik} under the model"
            )));
        }
        let joint = StreamMap::from_fn(|stream| {
            let (terms, given) = &stream_terms[stream];
            let k_len = eval.stream_ll[stream].len();
            let mut w = vec![0.0; n_top * k_len];
            for z in 0..n_top {
                if gamma[z] == 0.0 {
                    continue;
                }
                for k in 0..k_len {
                    w[z * k_len + k] = gamma[z] * (terms[z * k_len + k] - given[z]).exp();
                }
            }
            w
        });
        Ok(EpisodePosterior {
            log_lik,
            gamma,
            joint,
        })
    }

    /// Posterior responsibilities of one episode, with every observed scalar
    /// included.
    pub fn e_step(&self, e: &Episode) -> Result<Responsibilities> {
        self.e_step_masked(e, ScalarMask::ALL)
    }

    pub fn e_step_masked(&self, e: &Episode, mask: ScalarMask) -> Result<Responsibilities> {
        let eval = self.evaluate(e)?;
        let post = self.posterior_from_eval(e, &eval, mask)?;
        let hmm = StreamMap::try_from_fn(|stream| -> Result<Vec<HmmPosterior>> {
            match (self.hmm(stream), e.nested(stream)) {
                (Some(m), Some(seq)) => (0..m.n_states())
                    .map(|k| m.posterior(seq, k).map(|(_, p)| p))
                    .collect(),
                _ => Ok(Vec::new()),
            }
        })?;
        Ok(Responsibilities {
            log_lik: post.log_lik,
            gamma: post.gamma,
            joint: post.joint,
            hmm,
        })
    }

    fn accumulate_scalars(&self, e: &Episode, gamma: &[f64], stats: &mut SufficientStats) {
        for (z, &g) in gamma.iter().enumerate() {
            stats.top.add(z, g);
            if let Some(age) = e.age {
                stats.age[z].add(age, g);
            }
            if let Some(sex) = e.sex {
                stats.sex[z].add(sex, g);
            }
            if let Some(death) = e.death {
                stats.death[z].add(death, g);
            }
        }
    }

    fn accumulate_mixing(&self, joint: &StreamMap<Vec<f64>>, stats: &mut SufficientStats) -> StreamMap<Vec<f64>> {
        StreamMap::from_fn(|stream| {
            let k_len = self.hyper.sub_states(stream);
            let mut marginal = vec![0.0; k_len];
            for (z, row) in joint[stream].chunks(k_len).enumerate() {
                for (k, &w) in row.iter().enumerate() {
                    stats.mixing[stream][z].add(k, w);
                    marginal[k] += w;
                }
            }
            marginal
        })
    }

    /// Adds one episode's expected statistics to `stats`.
    pub fn accumulate_episode(
        &self,
        e: &Episode,
        mask: ScalarMask,
        stats: &mut SufficientStats,
    ) -> Result<()> {
        let eval = self.evaluate(e)?;
        let post = self.posterior_from_eval(e, &eval, mask)?;
        stats.n_episodes += 1;
        stats.log_lik += post.log_lik;
        self.accumulate_scalars(e, &post.gamma, stats);
        let w = self.accumulate_mixing(&post.joint, stats);
        self.diagnoses
            .accumulate(&e.admission_dx, &(), &w.admission_dx, &mut stats.diagnoses);
        self.diagnoses
            .accumulate(&e.discharge_dx, &(), &w.discharge_dx, &mut stats.diagnoses);
        self.beds.accumulate(&e.beds, &(), &w.beds, &mut stats.beds);
        self.labs.accumulate(&e.labs, &eval.labs, &w.labs, &mut stats.labs);
        self.neuro.accumulate(&e.neuro, &eval.neuro, &w.neuro, &mut stats.neuro);
        self.meds.accumulate(&e.meds, &eval.meds, &w.meds, &mut stats.meds);
        Ok(())
    }

    /// Initialization statistics: Dirichlet(1) top responsibilities and
    /// independent Dirichlet(1) sub-state responsibilities per episode.
    fn accumulate_random(&self, e: &Episode, rng: &mut impl Rng, stats: &mut SufficientStats) {
        let n_top = self.n_top();
        let gamma = dirichlet_one(n_top, rng);
        stats.n_episodes += 1;
        self.accumulate_scalars(e, &gamma, stats);
        let joint = StreamMap::from_fn(|stream| {
            let r = dirichlet_one(self.hyper.sub_states(stream), rng);
            gamma
                .iter()
                .flat_map(|g| r.iter().map(move |x| g * x))
                .collect::<Vec<f64>>()
        });
        let w = self.accumulate_mixing(&joint, stats);
        self.diagnoses
            .accumulate_random(&e.admission_dx, &w.admission_dx, rng, &mut stats.diagnoses);
        self.diagnoses
            .accumulate_random(&e.discharge_dx, &w.discharge_dx, rng, &mut stats.diagnoses);
        self.beds.accumulate_random(&e.beds, &w.beds, rng, &mut stats.beds);
        self.labs.accumulate_random(&e.labs, &w.labs, rng, &mut stats.labs);
        self.neuro.accumulate_random(&e.neuro, &w.neuro, rng, &mut stats.neuro);
        self.meds.accumulate_random(&e.meds, &w.meds, rng, &mut stats.meds);
    }

    /// E-step over a corpus, reduced in a fixed chunk order.
    pub fn expectation(&self, data: &[Episode], mask: ScalarMask) -> Result<SufficientStats> {
        let partials = data
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut stats = self.new_stats();
                for e in chunk {
                    self.accumulate_episode(e, mask, &mut stats)?;
                }
                Ok(stats)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(reduce(partials, || self.new_stats()))
    }

    /// M-step. States and rows without weight keep their current parameters.
    pub fn m_step(&self, stats: &SufficientStats) -> Result<EpisodeModel> {
        let top = or_keep(stats.top.fit(), &self.top)?;
        let scalars = (0..self.n_top())
            .map(|z| {
                let prev = &self.scalars[z];
                Ok(TopScalars {
                    age: or_keep(stats.age[z].fit(&prev.age), &prev.age)?,
                    sex: or_keep(stats.sex[z].fit(), &prev.sex)?,
                    death: or_keep(stats.death[z].fit(), &prev.death)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mixing = StreamMap::try_from_fn(|stream| -> Result<MixingMatrix> {
            MixingMatrix::new(
                stats.mixing[stream]
                    .iter()
                    .zip(self.mixing[stream].rows())
                    .map(|(s, prev)| or_keep(s.fit(), prev))
                    .collect::<Result<Vec<_>>>()?,
            )
        })?;
        Ok(EpisodeModel {
            hyper: self.hyper,
            top,
            scalars,
            mixing,
            diagnoses: self.diagnoses.m_step(&stats.diagnoses)?,
            beds: self.beds.m_step(&stats.beds)?,
            labs: self.labs.m_step(&stats.labs)?,
            neuro: self.neuro.m_step(&stats.neuro)?,
            meds: self.meds.m_step(&stats.meds)?,
        })
    }

    /// A model with random sub-model parameters and data-scaled rates. Used as
    /// the fallback for states left without weight by initialization.
    pub fn random(
        hp: &Hyperparams,
        vocab: &VocabSizes,
        rates: &DataRates,
        age_support: (i64, i64),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        hp.validate()?;
        let age_mid = (age_support.0 + age_support.1) as f64 / 2.0;
        let age_var = (((age_support.1 - age_support.0) as f64) / 4.0).powi(2).max(1.0);
        let scalars = (0..hp.n_top)
            .map(|_| {
                Ok(TopScalars {
                    age: QuantizedGaussianDist::new(age_mid, age_var, age_support.0, age_support.1)?,
                    sex: BernoulliDist::new(0.5)?,
                    death: BernoulliDist::new(0.5)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        EpisodeModel::new(
            CategoricalDist::uniform(hp.n_top),
            scalars,
            StreamMap::from_fn(|s| MixingMatrix::uniform(hp.n_top, hp.sub_states(s))),
            CollectionPool::random(hp.n_diagnoses, vocab.diagnoses, rates.diagnoses, rng)?,
            MarkovMixture::random(hp.n_beds, vocab.beds, rates.beds, rng)?,
            HmmMixture::random(hp.n_labs, hp.hmm_labs, vocab.labs, rates.labs.0, rates.labs.1, rng)?,
            HmmMixture::random(hp.n_neuro, hp.hmm_neuro, vocab.neuro, rates.neuro.0, rates.neuro.1, rng)?,
            HmmMixture::random(hp.n_meds, hp.hmm_meds, vocab.meds, rates.meds.0, rates.meds.1, rng)?,
        )
    }

    /// EM from one random initialization.
    fn fit_once(
        data: &[Episode],
        hp: &Hyperparams,
        vocab: &VocabSizes,
        cfg: &FitConfig,
        restart: usize,
    ) -> Result<(EpisodeModel, Vec<f64>, bool)> {
        let restart_seed = derive_seed(cfg.seed, Domain::Init, restart as u64);
        let mut base_rng = rng_for(restart_seed, Domain::Init, u64::MAX);
        let rates = DataRates::of(data);
        let base = EpisodeModel::random(hp, vocab, &rates, cfg.age_support, &mut base_rng)?;
        let partials: Vec<SufficientStats> = data
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut stats = base.new_stats();
                for (i, e) in chunk.iter().enumerate() {
                    let mut rng = rng_for(restart_seed, Domain::Init, (c * CHUNK + i) as u64);
                    base.accumulate_random(e, &mut rng, &mut stats);
                }
                stats
            })
            .collect();
        let init_stats = reduce(partials, || base.new_stats());
        let mut model = base.m_step(&init_stats)?;

        let max_iters = cfg.max_iters.max(1);
        let mut trace: Vec<f64> = Vec::new();
        let mut converged = false;
        loop {
            let stats = model.expectation(data, cfg.scalars)?;
            let ll = stats.log_lik;
            let prev = trace.last().copied();
            trace.push(ll);
            if let Some(prev) = prev {
                if ((ll - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < cfg.rel_tol {
                    converged = true;
                    break;
                }
            }
            if trace.len() >= max_iters {
                break;
            }
            model = model.m_step(&stats)?;
        }
        Ok((model, trace, converged))
    }

    /// Fits a model by EM with `cfg.restarts` random restarts and returns the
    /// restart with the highest final log-likelihood (lowest index on ties),
    /// with top states sorted by descending weight.
    pub fn fit(
        data: &[Episode],
        hp: &Hyperparams,
        vocab: &VocabSizes,
        cfg: &FitConfig,
    ) -> Result<(EpisodeModel, FitReport)> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        hp.validate()?;
        if cfg.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be at least 1".into()));
        }
        let mut best: Option<(EpisodeModel, Vec<f64>, bool, usize)> = None;
        let mut restart_log_liks = Vec::with_capacity(cfg.restarts);
        for r in 0..cfg.restarts {
            let (model, trace, converged) = Self::fit_once(data, hp, vocab, cfg, r)?;
            let ll = *trace.last().expect("at least one iteration");
            restart_log_liks.push(ll);
            let better = match &best {
                None => true,
                Some((_, t, _, _)) => ll > *t.last().expect("non-empty trace"),
            };
            if better {
                best = Some((model, trace, converged, r));
            }
        }
        let (model, trace, converged, best_restart) = best.expect("at least one restart");
        let report = FitReport {
            iterations: trace.len(),
            log_lik_trace: trace,
            converged,
            seed: cfg.seed,
            best_restart,
            restart_log_liks,
        };
        Ok((model.sorted_by_weight(), report))
    }
}

fn reduce<S: Merge>(partials: Vec<S>, empty: impl FnOnce() -> S) -> S {
    let mut iter = partials.into_iter();
    let mut acc = iter.next().unwrap_or_else(empty);
    for p in iter {
        acc.merge(&p);
    }
    acc
}

/// Mean stream lengths and items per timepoint, used to scale initial rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataRates {
    pub beds: f64,
    pub diagnoses: f64,
    /// (timepoints per sequence, items per timepoint)
    pub labs: (f64, f64),
    pub neuro: (f64, f64),
    pub meds: (f64, f64),
}

impl DataRates {
    pub fn of(data: &[Episode]) -> Self {
        let n = data.len().max(1) as f64;
        let mean = |f: &dyn Fn(&Episode) -> usize| data.iter().map(f).sum::<usize>() as f64 / n;
        let nested = |s: Stream| {
            let timepoints: usize = data.iter().map(|e| e.stream_len(s)).sum();
            let items: usize = data
                .iter()
                .flat_map(|e| e.nested(s).unwrap_or(&[]))
                .map(Vec::len)
                .sum();
            (
                timepoints as f64 / n,
                if timepoints > 0 { items as f64 / timepoints as f64 } else { 1.0 },
            )
        };
        Self {
            beds: mean(&|e| e.beds.len()),
            diagnoses: mean(&|e| e.admission_dx.len() + e.discharge_dx.len()) / 2.0,
            labs: nested(Stream::Labs),
            neuro: nested(Stream::Neuro),
            meds: nested(Stream::Meds),
        }
    }
}
