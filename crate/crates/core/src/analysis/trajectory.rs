use std::fmt::Write as _;

use super::items::top_items;
use crate::distributions::MarkovChainDist;
use crate::error::{Error, Result};
use crate::math::argmax;
use crate::submodels::{HmmMixture, SubModel};

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub state: usize,
    /// Mean items per timepoint in this HMM state.
    pub count_rate: f64,
    pub top_items: Vec<(usize, f64)>,
}

/// Greedy walk through the HMM states of one mixture state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    /// Whether the walk ended in a state whose most likely successor is itself.
    pub converged: bool,
}

impl Trajectory {
    pub fn states(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.state).collect()
    }

    /// `step\tstate\tcount_rate\titems` rows; items as `name:prob` pairs.
    pub fn to_tsv(&self, item_name: impl Fn(usize) -> String) -> String {
        let mut out = String::from("step\tstate\tcount_rate\titems\n");
        for (i, s) in self.steps.iter().enumerate() {
            let items: Vec<String> = s.top_items.iter().map(|(id, p)| format!("{}:{p}", item_name(*id))).collect();
            writeln!(out, "{i}\t{}\t{}\t{}", s.state, s.count_rate, items.join(",")).unwrap();
        }
        if !self.converged {
            out.push_str("# not converged\n");
        }
        out
    }
}

/// Starts at the most likely initial HMM state and repeatedly moves to the
/// most likely successor, stopping at a state that prefers itself or after
/// `max_steps` states. Ties go to the lower state index.
pub fn greedy_trajectory(mixture: &HmmMixture, k: usize, max_steps: usize, top_k: usize) -> Result<Trajectory> {
    if k >= mixture.n_states() {
        return Err(Error::InvalidParameter(format!(
            "mixture state {k} out of range for {} states",
            mixture.n_states()
        )));
    }
    if max_steps == 0 {
        return Err(Error::InvalidParameter("max_steps must be at least 1".into()));
    }
    let chain = &mixture.state(k).state_chain;
    let step = |s: usize| -> Result<TrajectoryStep> {
        let e = mixture.emission().state(s);
        Ok(TrajectoryStep {
            state: s,
            count_rate: e.count.rate(),
            top_items: top_items(&e.items, top_k)?,
        })
    };
    let mut cur = argmax(chain.initial().probs());
    let mut steps = vec![step(cur)?];
    loop {
        let next = argmax(chain.transition(cur).probs());
        if next == cur {
            return Ok(Trajectory { steps, converged: true });
        }
        if steps.len() == max_steps {
            return Ok(Trajectory {
                steps,
                converged: false,
            });
        }
        cur = next;
        steps.push(step(cur)?);
    }
}

/// Most probable state path of length `len` under the chain alone (Viterbi
/// without emissions). Ties go to the lower state index.
pub fn most_likely_path(chain: &MarkovChainDist, len: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let s = chain.len();
    let mut score: Vec<f64> = chain.initial().log_probs().to_vec();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(len - 1);
    for _ in 1..len {
        let mut next = vec![f64::NEG_INFINITY; s];
        let mut arg = vec![0; s];
        for to in 0..s {
            for from in 0..s {
                let v = score[from] + chain.log_transition(from, to);
                if v > next[to] {
                    next[to] = v;
                    arg[to] = from;
                }
            }
        }
        back.push(arg);
        score = next;
    }
    let mut path = vec![argmax(&score)];
    for arg in back.iter().rev() {
        path.push(arg[*path.last().expect("non-empty")]);
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{CategoricalDist, PoissonDist};
    use crate::rng::{rng_for, Domain};
    use crate::submodels::{HmmEmission, HmmEmissionState, HmmSeqState};
    use crate::synthetic::random_chain;

    fn mixture(chain: MarkovChainDist) -> HmmMixture {
        let s = chain.len();
        let emission = HmmEmission::new(
            (0..s)
                .map(|_| HmmEmissionState {
                    count: PoissonDist::new(1.0).unwrap(),
                    items: CategoricalDist::uniform(4),
                })
                .collect(),
        )
        .unwrap();
        HmmMixture::new(
            emission,
            vec![HmmSeqState {
                length: PoissonDist::new(3.0).unwrap(),
                state_chain: chain,
            }],
        )
        .unwrap()
    }

    fn chain(initial: Vec<f64>, rows: Vec<Vec<f64>>) -> MarkovChainDist {
        MarkovChainDist::new(
            CategoricalDist::new(initial).unwrap(),
            rows.into_iter().map(|r| CategoricalDist::new(r).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn self_absorbing_start() {
        let m = mixture(chain(vec![0.7, 0.3], vec![vec![0.6, 0.4], vec![0.5, 0.5]]));
        let t = greedy_trajectory(&m, 0, 10, 3).unwrap();
        assert_eq!(t.states(), [0]);
        assert!(t.converged);
        assert_eq!(t.steps[0].top_items.len(), 3);
    }

    #[test]
    fn cycle_does_not_converge() {
        let m = mixture(chain(vec![1.0, 0.0], vec![vec![0.1, 0.9], vec![0.9, 0.1]]));
        let t = greedy_trajectory(&m, 0, 5, 3).unwrap();
        assert_eq!(t.states(), [0, 1, 0, 1, 0]);
        assert!(!t.converged);
        assert!(t.to_tsv(|i| i.to_string()).ends_with("# not converged\n"));
    }

    #[test]
    fn random_chains_match_independent_walk() {
        for i in 0..20 {
            let c = random_chain(5, &mut rng_for(8, Domain::Sample, i)).unwrap();
            let m = mixture(c.clone());
            let t = greedy_trajectory(&m, 0, 20, 1).unwrap();
            // Re-walk using a plain comparison loop.
            let best = |p: &[f64]| {
                let mut b = 0;
                for j in 1..p.len() {
                    if p[j] > p[b] {
                        b = j;
                    }
                }
                b
            };
            let mut want = vec![best(c.initial().probs())];
            loop {
                let n = best(c.transition(*want.last().unwrap()).probs());
                if n == *want.last().unwrap() || want.len() == 20 {
                    break;
                }
                want.push(n);
            }
            assert_eq!(t.states(), want);
        }
    }

    #[test]
    fn relabeling_permutes_trajectory() {
        let c = chain(
            vec![0.1, 0.2, 0.7],
            vec![vec![0.2, 0.7, 0.1], vec![0.1, 0.1, 0.8], vec![0.3, 0.3, 0.4]],
        );
        let m = mixture(c);
        let order = [2, 0, 1];
        let relabeled = m.relabel_hmm_states(&order);
        let a = greedy_trajectory(&m, 0, 10, 1).unwrap().states();
        let b = greedy_trajectory(&relabeled, 0, 10, 1).unwrap().states();
        let mapped: Vec<usize> = b.iter().map(|&s| order[s]).collect();
        assert_eq!(mapped, a);
    }

    #[test]
    fn viterbi_matches_exhaustive_search() {
        let c = random_chain(3, &mut rng_for(9, Domain::Sample, 0)).unwrap();
        for len in 1..=4 {
            let mut best = (f64::NEG_INFINITY, Vec::new());
            let total = 3usize.pow(len as u32);
            for code in 0..total {
                let p: Vec<usize> = (0..len).map(|t| code / 3usize.pow((len - 1 - t) as u32) % 3).collect();
                let lp = c.log_likelihood(&p).unwrap();
                if lp > best.0 {
                    best = (lp, p);
                }
            }
            assert_eq!(most_likely_path(&c, len), best.1);
        }
        assert!(most_likely_path(&c, 0).is_empty());
    }
}
