//! Read-only interrogation of a trained model: enrichment of a scalar by
//! sub-model state, state distributions, bed-sequence trees, HMM
//! trajectories, item rankings and likelihood ratios, and scalar inference
//! on partial episodes.

mod items;
mod trajectory;
mod tree;

pub use items::{item_likelihood_ratio, top_items, LikelihoodRatio, NOT_ADMINISTERED_MASS};
pub use trajectory::{greedy_trajectory, most_likely_path, Trajectory, TrajectoryStep};
pub use tree::{sequence_tree, SequenceTree, TreeNode};

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Episode, EpisodeModel, ScalarMask, Stream, StreamMap};

/// Binary scalar whose conditional probability is reported per sub-state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Death,
    Sex,
}

impl Target {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "death" => Some(Self::Death),
            "sex" => Some(Self::Sex),
            _ => None,
        }
    }

    fn prob(self, model: &EpisodeModel, z: usize) -> f64 {
        let s = model.scalars(z);
        match self {
            Target::Death => s.death.p(),
            Target::Sex => s.sex.p(),
        }
    }
}

/// `P(target = 1 | sub-state)` for every sub-state of a stream, ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct EnrichmentTable {
    pub stream: Stream,
    /// Original sub-state index of each row.
    pub states: Vec<usize>,
    pub probs: Vec<f64>,
}

impl EnrichmentTable {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# stream {}\nrank\tstate\tprobability\n", self.stream);
        for (rank, (s, p)) in self.states.iter().zip(&self.probs).enumerate() {
            writeln!(out, "{rank}\t{s}\t{p}").unwrap();
        }
        out
    }
}

/// `Σ_z p_z p_{z,k} p_target(z) / Σ_z p_z p_{z,k}` for each sub-state `k`,
/// sorted ascending (stable, so ties keep state order).
pub fn target_enrichment(model: &EpisodeModel, stream: Stream, target: Target) -> EnrichmentTable {
    let m = model.mixing(stream);
    let w = model.top_weights();
    let raw: Vec<f64> = (0..m.n_states())
        .map(|k| {
            let (mut num, mut den) = (0.0, 0.0);
            for z in 0..model.n_top() {
                let joint = w.prob(z) * m.prob(z, k);
                num += joint * target.prob(model, z);
                den += joint;
            }
            if den > 0.0 {
                num / den
            } else {
                // No top state reaches `k`; fall back to the marginal rate.
                (0..model.n_top()).map(|z| w.prob(z) * target.prob(model, z)).sum()
            }
        })
        .collect();
    let mut states: Vec<usize> = (0..raw.len()).collect();
    states.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    EnrichmentTable {
        stream,
        probs: states.iter().map(|&k| raw[k]).collect(),
        states,
    }
}

/// Matrix with entry `(z, k) = p_z · p_{z,k}`.
pub fn state_distribution(model: &EpisodeModel, stream: Stream) -> Vec<Vec<f64>> {
    let m = model.mixing(stream);
    (0..model.n_top())
        .map(|z| {
            let pz = model.top_weights().prob(z);
            (0..m.n_states()).map(|k| pz * m.prob(z, k)).collect()
        })
        .collect()
}

pub fn state_distribution_tsv(model: &EpisodeModel, stream: Stream) -> String {
    let d = state_distribution(model, stream);
    let k = d.first().map_or(0, Vec::len);
    let mut out = format!("# stream {stream}\ntop");
    for j in 0..k {
        write!(out, "\t{j}").unwrap();
    }
    out.push('\n');
    for (z, row) in d.iter().enumerate() {
        write!(out, "{z}").unwrap();
        for p in row {
            write!(out, "\t{p}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scalar {
    Death,
    Sex,
    Age,
}

impl Scalar {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "death" => Some(Self::Death),
            "sex" => Some(Self::Sex),
            "age" => Some(Self::Age),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scalar::Death => "death",
            Scalar::Sex => "sex",
            Scalar::Age => "age",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScalarPosterior {
    /// Probability that the scalar equals 1.
    Binary(f64),
    /// Probabilities over the integer ages `support_min..`.
    Age { support_min: i64, probs: Vec<f64> },
}

impl ScalarPosterior {
    pub fn mean(&self) -> f64 {
        match self {
            ScalarPosterior::Binary(p) => *p,
            ScalarPosterior::Age { support_min, probs } => probs
                .iter()
                .enumerate()
                .map(|(i, p)| (*support_min + i as i64) as f64 * p)
                .sum(),
        }
    }
}

/// `Σ_z γ(z | observed parts) f(scalar | z)`, where the episode must not
/// contain the scalar. Every stream counts as observed, including empty ones.
pub fn infer_scalar(model: &EpisodeModel, partial: &Episode, scalar: Scalar) -> Result<ScalarPosterior> {
    infer_scalar_observed(model, partial, &StreamMap::from_fn(|_| true), scalar)
}

/// Like [`infer_scalar`], conditioning only on the streams flagged in
/// `observed`.
pub fn infer_scalar_observed(
    model: &EpisodeModel,
    partial: &Episode,
    observed: &StreamMap<bool>,
    scalar: Scalar,
) -> Result<ScalarPosterior> {
    let present = match scalar {
        Scalar::Death => partial.death.is_some(),
        Scalar::Sex => partial.sex.is_some(),
        Scalar::Age => partial.age.is_some(),
    };
    if present {
        return Err(Error::ScalarObserved(scalar.name()));
    }
    let gamma = model.top_posterior(partial, ScalarMask::ALL, observed)?;
    Ok(match scalar {
        Scalar::Death | Scalar::Sex => {
            let t = if scalar == Scalar::Death { Target::Death } else { Target::Sex };
            ScalarPosterior::Binary(gamma.iter().enumerate().map(|(z, g)| g * t.prob(model, z)).sum())
        }
        Scalar::Age => {
            let (lo, hi) = model.age_support();
            let mut probs = vec![0.0; (hi - lo + 1) as usize];
            for (z, g) in gamma.iter().enumerate() {
                for (acc, p) in probs.iter_mut().zip(model.scalars(z).age.pmf_table()) {
                    *acc += g * p;
                }
            }
            ScalarPosterior::Age {
                support_min: lo,
                probs,
            }
        }
    })
}
