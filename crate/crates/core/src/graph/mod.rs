//! Undirected signed graphs with integer weights.
//!
//! A [`SignedGraph`] stores each unordered pair once and exposes the two
//! nonnegative sub-adjacencies the encoders consume: the positive view
//! `Y+ = max(Y, 0)` and the negative view `|min(Y, 0)|`.

mod io;
mod split;

pub use io::{
    load_edge_list, parse_edge_list, parse_split, read_split, write_edge_list, write_split,
    LoadOptions, LoadedGraph,
};
pub use split::{split_edges, EdgeSplit};

use crate::sparse::CsrMatrix;
use crate::textio::{sha256_hex, FormatError};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

/// Source line of a bad record, when the record came from a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location(pub Option<usize>);

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(line) => write!(f, " (line {line})"),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("self-loop on node {node}{at}")]
    SelfLoop { node: u64, at: Location },
    #[error("zero weight on pair ({i}, {j}){at}")]
    ZeroWeight { i: u64, j: u64, at: Location },
    #[error("pair ({i}, {j}) listed with conflicting weights {first} and {second}{at}")]
    ConflictingEdge {
        i: u64,
        j: u64,
        first: i64,
        second: i64,
        at: Location,
    },
    #[error("node id {node} out of range for {n} nodes{at}")]
    NodeOutOfRange { node: u64, n: usize, at: Location },
    #[error("graph must have at least one node")]
    Empty,
    #[error("split fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("too few {sign} edges to stratify: {count} edges, fraction {fraction}")]
    TooSmallToStratify {
        sign: &'static str,
        count: usize,
        fraction: f64,
    },
    #[error("cannot sample {needed} zero pairs: only {available} non-edges exist")]
    NotEnoughNonEdges { needed: usize, available: usize },
    #[error("invalid node ordering: {0}")]
    InvalidPermutation(String),
}

/// One undirected edge, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: i64,
}

/// Immutable undirected signed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedGraph {
    n: usize,
    edges: Vec<Edge>,
    pos: CsrMatrix,
    neg: CsrMatrix,
    pos_degree: Vec<i64>,
    neg_degree: Vec<i64>,
}

impl SignedGraph {
    /// Builds a graph from `(i, j, w)` triples over nodes `0..n`.
    ///
    /// Pairs are unordered; a pair repeated with the same weight is kept once,
    /// a pair repeated with a different weight is an error.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, i64)>) -> Result<Self, GraphError> {
        Self::build(n, edges.into_iter().map(|(i, j, w)| (i, j, w, None)))
    }

    pub(crate) fn build(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, i64, Option<usize>)>,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen: HashMap<(usize, usize), i64> = HashMap::new();
        let mut list = Vec::new();
        for (a, b, w, line) in edges {
            let at = Location(line);
            for node in [a, b] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node: node as u64, n, at });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop { node: a as u64, at });
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if w == 0 {
                return Err(GraphError::ZeroWeight { i: i as u64, j: j as u64, at });
            }
            match seen.get(&(i, j)) {
                Some(&first) if first != w => {
                    return Err(GraphError::ConflictingEdge {
                        i: i as u64,
                        j: j as u64,
                        first,
                        second: w,
                        at,
                    })
                }
                Some(_) => {}
                None => {
                    seen.insert((i, j), w);
                    list.push(Edge { i, j, weight: w });
                }
            }
        }
        list.sort();
        Ok(Self::from_sorted_edges(n, list))
    }

    fn from_sorted_edges(n: usize, edges: Vec<Edge>) -> Self {
        let mut pos_t = Vec::new();
        let mut neg_t = Vec::new();
        let mut pos_degree = vec![0i64; n];
        let mut neg_degree = vec![0i64; n];
        for e in &edges {
            let (t, deg) = if e.weight > 0 {
                (&mut pos_t, &mut pos_degree)
            } else {
                (&mut neg_t, &mut neg_degree)
            };
            let m = e.weight.abs();
            t.push((e.i, e.j, m as f64));
            t.push((e.j, e.i, m as f64));
            deg[e.i] += m;
            deg[e.j] += m;
        }
        SignedGraph {
            n,
            pos: CsrMatrix::from_triplets(n, n, &pos_t),
            neg: CsrMatrix::from_triplets(n, n, &neg_t),
            edges,
            pos_degree,
            neg_degree,
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Edges sorted by `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn positive_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.weight > 0).count()
    }

    pub fn negative_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.weight < 0).count()
    }

    /// `Y+`, symmetric and nonnegative.
    pub fn pos_view(&self) -> &CsrMatrix {
        &self.pos
    }

    /// `|Y-|`: negative weights flipped to positive magnitudes.
    pub fn neg_view(&self) -> &CsrMatrix {
        &self.neg
    }

    /// Signed weight of the pair, 0 for a non-edge.
    pub fn weight(&self, i: usize, j: usize) -> i64 {
        (self.pos.get(i, j) - self.neg.get(i, j)) as i64
    }

    pub fn pos_degree(&self) -> &[i64] {
        &self.pos_degree
    }

    pub fn neg_degree(&self) -> &[i64] {
        &self.neg_degree
    }

    pub fn abs_degree(&self) -> Vec<i64> {
        self.pos_degree
            .iter()
            .zip(&self.neg_degree)
            .map(|(p, q)| p + q)
            .collect()
    }

    /// Signed adjacency `Y = Y+ - |Y-|` as a symmetric sparse matrix.
    pub fn signed_adjacency(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(2 * self.edges.len());
        for e in &self.edges {
            t.push((e.i, e.j, e.weight as f64));
            t.push((e.j, e.i, e.weight as f64));
        }
        CsrMatrix::from_triplets(self.n, self.n, &t)
    }

    /// Collapses every weight to its sign.
    pub fn binarized(&self) -> SignedGraph {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                weight: e.weight.signum(),
                ..*e
            })
            .collect();
        Self::from_sorted_edges(self.n, edges)
    }

    /// Relabels nodes so that new node `k` is old node `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<SignedGraph, GraphError> {
        let inverse = inverse_permutation(order, self.n)?;
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (inverse[e.i], inverse[e.j]);
                Edge {
                    i: a.min(b),
                    j: a.max(b),
                    weight: e.weight,
                }
            })
            .collect();
        edges.sort();
        Ok(Self::from_sorted_edges(self.n, edges))
    }

    /// SHA-256 over the canonical edge listing; identifies the graph a model
    /// was trained on.
    pub fn digest(&self) -> String {
        let mut text = format!("nodes {}\n", self.n);
        for e in &self.edges {
            text.push_str(&format!("{} {} {}\n", e.i, e.j, e.weight));
        }
        sha256_hex(text.as_bytes())
    }
}

/// `(Y+, |Y-|)`.
pub fn subgraph_views(g: &SignedGraph) -> (CsrMatrix, CsrMatrix) {
    (g.pos_view().clone(), g.neg_view().clone())
}

/// Validates `order` as a permutation of `0..n` and returns its inverse.
pub fn inverse_permutation(order: &[usize], n: usize) -> Result<Vec<usize>, GraphError> {
    if order.len() != n {
        return Err(GraphError::InvalidPermutation(format!(
            "length {} for {n} nodes",
            order.len()
        )));
    }
    let mut inverse = vec![usize::MAX; n];
    for (k, &old) in order.iter().enumerate() {
        if old >= n || inverse[old] != usize::MAX {
            return Err(GraphError::InvalidPermutation(format!(
                "entry {old} at position {k} is out of range or repeated"
            )));
        }
        inverse[old] = k;
    }
    Ok(inverse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn views_split_signs() {
        let g = SignedGraph::new(3, [(0, 1, -2), (1, 2, 3)]).unwrap();
        let (pos, neg) = subgraph_views(&g);
        assert_eq!(neg.get(0, 1), 2.0);
        assert_eq!(neg.get(1, 0), 2.0);
        assert_eq!(pos.get(0, 1), 0.0);
        assert_eq!(pos.get(1, 2), 3.0);
        assert_eq!(neg.get(1, 2), 0.0);
        assert_eq!(g.weight(2, 1), 3);
        assert_eq!(g.abs_degree(), vec![2, 5, 3]);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(
            SignedGraph::new(3, [(1, 1, 1)]),
            Err(GraphError::SelfLoop { node: 1, .. })
        ));
        assert!(matches!(
            SignedGraph::new(3, [(0, 1, 0)]),
            Err(GraphError::ZeroWeight { .. })
        ));
        assert!(matches!(
            SignedGraph::new(3, [(0, 1, 1), (1, 0, -1)]),
            Err(GraphError::ConflictingEdge { .. })
        ));
        assert!(matches!(
            SignedGraph::new(2, [(0, 2, 1)]),
            Err(GraphError::NodeOutOfRange { .. })
        ));
        // Same pair, same weight: kept once.
        let g = SignedGraph::new(2, [(0, 1, 1), (1, 0, 1)]).unwrap();
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn binarize_keeps_signs() {
        let g = SignedGraph::new(3, [(0, 1, -4), (1, 2, 3)]).unwrap().binarized();
        assert_eq!(g.weight(0, 1), -1);
        assert_eq!(g.weight(1, 2), 1);
    }

    fn arb_graph() -> impl Strategy<Value = SignedGraph> {
        (2usize..25).prop_flat_map(|n| {
            prop::collection::vec((0..n, 0..n, prop_oneof![-3i64..=-1, 1i64..=3]), 0..60).prop_map(
                move |raw| {
                    let mut seen = std::collections::HashSet::new();
                    let edges: Vec<_> = raw
                        .into_iter()
                        .filter(|&(i, j, _)| i != j && seen.insert((i.min(j), i.max(j))))
                        .collect();
                    SignedGraph::new(n, edges).unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn one_sign_per_pair_and_reconstruction(g in arb_graph()) {
            let y = g.signed_adjacency();
            let n = g.node_count();
            for i in 0..n {
                for j in 0..n {
                    let p = g.pos_view().get(i, j);
                    let q = g.neg_view().get(i, j);
                    prop_assert!(p >= 0.0 && q >= 0.0);
                    prop_assert_eq!(p * q, 0.0);
                    prop_assert_eq!(p - q, y.get(i, j));
                    prop_assert_eq!(y.get(i, j), y.get(j, i));
                }
            }
            let abs = g.abs_degree();
            for i in 0..n {
                let row_abs: f64 = y.row(i).map(|(_, v)| v.abs()).sum();
                prop_assert_eq!(abs[i] as f64, row_abs);
                prop_assert_eq!(abs[i], g.pos_degree()[i] + g.neg_degree()[i]);
            }
        }

        #[test]
        fn relabeling_preserves_degree_multiset(g in arb_graph(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let n = g.node_count();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let h = g.permuted(&order).unwrap();
            let mut a = g.abs_degree();
            let mut b = h.abs_degree();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
            for (k, &old) in order.iter().enumerate() {
                prop_assert_eq!(h.pos_degree()[k], g.pos_degree()[old]);
                prop_assert_eq!(h.neg_degree()[k], g.neg_degree()[old]);
            }
        }
    }
}
