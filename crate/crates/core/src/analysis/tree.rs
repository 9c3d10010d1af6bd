use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::submodels::MarkovSeqState;

/// One non-empty prefix in a [`SequenceTree`].
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub path: Vec<usize>,
    /// Index of the parent node, `None` for first items.
    pub parent: Option<usize>,
    /// Probability that the complete sequence equals `path`.
    pub termination: f64,
}

/// All bed sequences with probability at least `threshold`, arranged as a
/// prefix tree. A prefix appears when it is itself such a sequence or when
/// some extension of it is.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTree {
    pub threshold: f64,
    pub max_depth: Option<usize>,
    /// Probability of the empty sequence.
    pub empty: f64,
    /// Nodes in depth-first order, children by ascending item id.
    pub nodes: Vec<TreeNode>,
}

impl SequenceTree {
    /// Complete sequences meeting the threshold, with their probabilities.
    pub fn sequences(&self) -> Vec<(Vec<usize>, f64)> {
        self.nodes
            .iter()
            .filter(|n| n.termination >= self.threshold)
            .map(|n| (n.path.clone(), n.termination))
            .collect()
    }

    /// Graphviz document: one node per prefix labeled with its termination
    /// probability, edges labeled with the item.
    pub fn to_dot(&self, name: &str, item_name: impl Fn(usize) -> String) -> String {
        let esc = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut out = format!("digraph \"{}\" {{\n", esc(name));
        writeln!(out, "  root [label=\"{}\"];", self.empty).unwrap();
        for (i, n) in self.nodes.iter().enumerate() {
            writeln!(out, "  n{i} [label=\"{}\"];", n.termination).unwrap();
            let from = n.parent.map_or_else(|| "root".to_string(), |p| format!("n{p}"));
            let item = *n.path.last().expect("non-empty path");
            writeln!(out, "  {from} -> n{i} [label=\"{}\"];", esc(&item_name(item))).unwrap();
        }
        out.push_str("}\n");
        out
    }
}

/// Depth-first enumeration of the sequences of one bed sub-state.
///
/// A subtree rooted at a prefix of length `n` with chain probability `q` can
/// hold no sequence more probable than `q · P(N ≥ n)`, so it is skipped when
/// that bound is under the threshold. `threshold = 0` enumerates everything
/// and therefore needs `max_depth`.
pub fn sequence_tree(state: &MarkovSeqState, threshold: f64, max_depth: Option<usize>) -> Result<SequenceTree> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside [0, 1]")));
    }
    if threshold == 0.0 && max_depth.is_none() {
        return Err(Error::InvalidParameter("threshold 0 needs a depth limit".into()));
    }
    let mut tree = SequenceTree {
        threshold,
        max_depth,
        empty: state.length.pmf(0),
        nodes: Vec::new(),
    };
    let chain = &state.chain;
    let cut = threshold * (1.0 - 1e-12);
    let mut path = Vec::new();
    for item in 0..chain.len() {
        let q = chain.initial().prob(item);
        visit(state, item, q, None, cut, &mut path, &mut tree);
    }
    Ok(tree)
}

/// Returns whether the node for `path + [item]` was kept.
fn visit(
    state: &MarkovSeqState,
    item: usize,
    q: f64,
    parent: Option<usize>,
    cut: f64,
    path: &mut Vec<usize>,
    tree: &mut SequenceTree,
) -> bool {
    let n = path.len() + 1;
    if tree.max_depth.is_some_and(|d| n > d) {
        return false;
    }
    if q * state.length.tail(n) < cut || (q == 0.0 && tree.threshold > 0.0) {
        return false;
    }
    path.push(item);
    let idx = tree.nodes.len();
    let termination = state.length.pmf(n) * q;
    tree.nodes.push(TreeNode {
        path: path.clone(),
        parent,
        termination,
    });
    let mut any_child = false;
    let row = state.chain.transition(item);
    for next in 0..state.chain.len() {
        any_child |= visit(state, next, q * row.prob(next), Some(idx), cut, path, tree);
    }
    path.pop();
    if termination >= tree.threshold || any_child {
        true
    } else {
        // Leaf prefixes are only kept for the sequences under them.
        tree.nodes.truncate(idx);
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{CategoricalDist, MarkovChainDist, PoissonDist};

    fn state(initial: Vec<f64>, rows: Vec<Vec<f64>>, rate: f64) -> MarkovSeqState {
        MarkovSeqState {
            length: PoissonDist::new(rate).unwrap(),
            chain: MarkovChainDist::new(
                CategoricalDist::new(initial).unwrap(),
                rows.into_iter().map(|r| CategoricalDist::new(r).unwrap()).collect(),
            )
            .unwrap(),
        }
    }

    #[test]
    fn deterministic_start_single_node() {
        // ED = 0, ICU = 1.
        let s = state(vec![1.0, 0.0], vec![vec![0.5, 0.5], vec![0.5, 0.5]], 1.0);
        let t = sequence_tree(&s, 0.3, None).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].path, [0]);
        assert!((t.nodes[0].termination - (-1.0f64).exp()).abs() < 1e-15);
        assert!((t.empty - (-1.0f64).exp()).abs() < 1e-15);
    }

    /// Every sequence of length ≤ `depth` with its probability, lexicographic.
    fn brute_force(s: &MarkovSeqState, depth: usize) -> Vec<(Vec<usize>, f64)> {
        let v = s.chain.len();
        let mut out = Vec::new();
        let mut frontier: Vec<(Vec<usize>, f64)> = (0..v).map(|i| (vec![i], s.chain.initial().prob(i))).collect();
        for n in 1..=depth {
            let mut next = Vec::new();
            for (p, q) in &frontier {
                out.push((p.clone(), s.length.pmf(n) * q));
                let last = *p.last().unwrap();
                for j in 0..v {
                    let mut e = p.clone();
                    e.push(j);
                    next.push((e, q * s.chain.transition(last).prob(j)));
                }
            }
            frontier = next;
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    #[test]
    fn uniform_chain_unpruned_matches_enumeration() {
        let s = state(vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![0.5, 0.5]], 1.0);
        let t = sequence_tree(&s, 0.0, Some(4)).unwrap();
        let got = t.sequences();
        let want = brute_force(&s, 4);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.0, w.0);
            assert!((g.1 - w.1).abs() < 1e-12);
        }
        let total: f64 = t.empty + got.iter().map(|x| x.1).sum::<f64>();
        assert!((total - s.length.cdf(4)).abs() < 1e-12);
    }

    #[test]
    fn pruned_tree_holds_exactly_the_heavy_sequences() {
        let s = state(
            vec![0.6, 0.3, 0.1],
            vec![vec![0.1, 0.8, 0.1], vec![0.3, 0.3, 0.4], vec![0.0, 0.5, 0.5]],
            2.0,
        );
        let t = sequence_tree(&s, 0.01, None).unwrap();
        let want: Vec<_> = brute_force(&s, 12).into_iter().filter(|x| x.1 >= 0.01).collect();
        let got = t.sequences();
        assert_eq!(got.iter().map(|x| &x.0).collect::<Vec<_>>(), want.iter().map(|x| &x.0).collect::<Vec<_>>());
        // Every node is a prefix of some reported sequence.
        for n in &t.nodes {
            assert!(got.iter().any(|g| g.0.starts_with(&n.path)));
        }
        assert!(t.empty + got.iter().map(|x| x.1).sum::<f64>() <= 1.0);
    }

    #[test]
    fn zero_threshold_needs_depth() {
        let s = state(vec![1.0], vec![vec![1.0]], 1.0);
        assert!(sequence_tree(&s, 0.0, None).is_err());
        assert!(sequence_tree(&s, 1.5, None).is_err());
    }

    #[test]
    fn dot_output_has_one_edge_per_node() {
        let s = state(vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![0.5, 0.5]], 1.0);
        let t = sequence_tree(&s, 0.05, None).unwrap();
        let dot = t.to_dot("beds 0", |i| ["ED", "ICU"][i].to_string());
        assert_eq!(dot.matches(" -> ").count(), t.nodes.len());
        assert!(dot.starts_with("digraph \"beds 0\" {"));
        assert!(dot.contains("[label=\"ED\"]"));
    }
}
