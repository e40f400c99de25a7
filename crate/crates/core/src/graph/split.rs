use super::{Edge, GraphError, SignedGraph};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

/// A held-out link-prediction split.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSplit {
    /// The residual graph, on the same node set as the original.
    pub train_graph: SignedGraph,
    /// Removed positive edges, `i < j`, sorted.
    pub test_pos: Vec<(usize, usize)>,
    /// Removed negative edges, `i < j`, sorted.
    pub test_neg: Vec<(usize, usize)>,
    /// Pairs that are not edges of the original graph; as many as
    /// `test_pos` and `test_neg` together.
    pub test_zero: Vec<(usize, usize)>,
    pub seed: u64,
    pub fraction: f64,
}

impl EdgeSplit {
    pub fn digest(&self) -> String {
        crate::textio::sha256_hex(super::write_split(self).as_bytes())
    }
}

/// Removes `round(fraction * |E+|)` positive and `round(fraction * |E-|)`
/// negative edges, then samples as many non-edges uniformly without
/// replacement. Deterministic in `seed`.
///
/// Each sign must contribute at least two test edges.
pub fn split_edges(g: &SignedGraph, fraction: f64, seed: u64) -> Result<EdgeSplit, GraphError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(GraphError::BadFraction(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<Edge>, Vec<Edge>) = g.edges().iter().partition(|e| e.weight > 0);
    let mut take = |edges: &mut Vec<Edge>, sign: &'static str| -> Result<Vec<Edge>, GraphError> {
        let count = edges.len();
        if (count as f64) * fraction < 2.0 - 1e-9 {
            return Err(GraphError::TooSmallToStratify { sign, count, fraction });
        }
        let k = ((count as f64) * fraction).round() as usize;
        edges.shuffle(&mut rng);
        let mut removed: Vec<Edge> = edges.drain(..k).collect();
        removed.sort();
        Ok(removed)
    };
    let removed_pos = take(&mut pos, "positive")?;
    let removed_neg = take(&mut neg, "negative")?;

    let n = g.node_count();
    let needed = removed_pos.len() + removed_neg.len();
    let total_pairs = n * (n - 1) / 2;
    let available = total_pairs - g.edges().len();
    if needed > available {
        return Err(GraphError::NotEnoughNonEdges { needed, available });
    }
    let edge_set: HashSet<(usize, usize)> = g.edges().iter().map(|e| (e.i, e.j)).collect();
    let mut test_zero: Vec<(usize, usize)> = if 2 * needed <= available {
        let mut chosen = HashSet::with_capacity(needed);
        let mut out = Vec::with_capacity(needed);
        while out.len() < needed {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let pair = (a.min(b), a.max(b));
            if !edge_set.contains(&pair) && chosen.insert(pair) {
                out.push(pair);
            }
        }
        out
    } else {
        // Dense graph: enumerate the non-edges instead of rejecting.
        let mut all: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|p| !edge_set.contains(p))
            .collect();
        all.shuffle(&mut rng);
        all.truncate(needed);
        all
    };
    test_zero.sort();

    let mut train: Vec<Edge> = pos.into_iter().chain(neg).collect();
    train.sort();
    Ok(EdgeSplit {
        train_graph: SignedGraph::from_sorted_edges(n, train),
        test_pos: removed_pos.iter().map(|e| (e.i, e.j)).collect(),
        test_neg: removed_neg.iter().map(|e| (e.i, e.j)).collect(),
        test_zero,
        seed,
        fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_split, write_split};

    fn graph_with(n: usize, pos: usize, neg: usize) -> SignedGraph {
        let mut edges = Vec::new();
        let mut pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        for _ in 0..pos {
            let (i, j) = pairs.next().unwrap();
            edges.push((i, j, 1));
        }
        for _ in 0..neg {
            let (i, j) = pairs.next().unwrap();
            edges.push((i, j, -1));
        }
        SignedGraph::new(n, edges).unwrap()
    }

    #[test]
    fn stratified_counts() {
        let g = graph_with(40, 100, 50);
        let s = split_edges(&g, 0.2, 3).unwrap();
        assert_eq!(s.test_pos.len(), 20);
        assert_eq!(s.test_neg.len(), 10);
        assert_eq!(s.test_zero.len(), 30);
        assert_eq!(s.train_graph.positive_edge_count(), 80);
        assert_eq!(s.train_graph.negative_edge_count(), 40);
    }

    #[test]
    fn deterministic_in_seed() {
        let g = graph_with(40, 100, 50);
        assert_eq!(split_edges(&g, 0.2, 7).unwrap(), split_edges(&g, 0.2, 7).unwrap());
        assert_ne!(split_edges(&g, 0.2, 7).unwrap(), split_edges(&g, 0.2, 8).unwrap());
    }

    #[test]
    fn disjointness_and_reunion() {
        let g = graph_with(30, 60, 40);
        let s = split_edges(&g, 0.2, 11).unwrap();
        let original: HashSet<(usize, usize, i64)> =
            g.edges().iter().map(|e| (e.i, e.j, e.weight)).collect();
        let mut union: HashSet<(usize, usize, i64)> = s
            .train_graph
            .edges()
            .iter()
            .map(|e| (e.i, e.j, e.weight))
            .collect();
        for &(i, j) in s.test_pos.iter().chain(&s.test_neg) {
            assert_eq!(s.train_graph.weight(i, j), 0);
            assert!(union.insert((i, j, g.weight(i, j))));
        }
        assert_eq!(union, original);
        let zeros: HashSet<_> = s.test_zero.iter().collect();
        assert_eq!(zeros.len(), s.test_zero.len());
        assert!(s.test_zero.iter().all(|&(i, j)| g.weight(i, j) == 0 && i < j));
    }

    #[test]
    fn complete_graph_has_no_zero_pairs() {
        let g = graph_with(5, 5, 5);
        assert!(matches!(
            split_edges(&g, 0.5, 1),
            Err(GraphError::NotEnoughNonEdges { needed: 6, available: 0 })
        ));
    }

    #[test]
    fn too_small_and_bad_fraction() {
        let g = graph_with(30, 100, 9);
        assert!(matches!(
            split_edges(&g, 0.2, 1),
            Err(GraphError::TooSmallToStratify { sign: "negative", .. })
        ));
        assert!(matches!(split_edges(&g, 1.0, 1), Err(GraphError::BadFraction(_))));
        assert!(matches!(split_edges(&g, 0.0, 1), Err(GraphError::BadFraction(_))));
    }

    #[test]
    fn dense_graph_uses_enumeration() {
        // 45 pairs, 30 edges: 6 zero pairs needed out of 15.
        let g = graph_with(10, 15, 15);
        let s = split_edges(&g, 0.2, 5).unwrap();
        assert_eq!(s.test_zero.len(), 6);
        assert!(s.test_zero.iter().all(|&(i, j)| g.weight(i, j) == 0));
    }

    #[test]
    fn manifest_round_trip() {
        let g = graph_with(30, 60, 40);
        let s = split_edges(&g, 0.2, 4).unwrap();
        let back = parse_split(&write_split(&s)).unwrap();
        assert_eq!(back, s);
    }
}
