use super::{EdgeSplit, GraphError, SignedGraph};
use crate::textio::{FormatError, LineReader};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Collapse integer weights to +1 / -1.
    pub binarize: bool,
}

/// A graph read from an edge list together with the original node ids.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: SignedGraph,
    /// `id_map[k]` is the file's id for compact node `k`.
    pub id_map: Vec<u64>,
}

impl LoadedGraph {
    pub fn ids_unchanged(&self) -> bool {
        self.id_map.iter().enumerate().all(|(k, &id)| id == k as u64)
    }

    /// Two-column `compact<TAB>original` table.
    pub fn id_map_text(&self) -> String {
        let mut out = String::from("# compact\toriginal\n");
        for (k, id) in self.id_map.iter().enumerate() {
            let _ = writeln!(out, "{k}\t{id}");
        }
        out
    }
}

pub fn load_edge_list(path: impl AsRef<Path>, opts: LoadOptions) -> Result<LoadedGraph, GraphError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_edge_list(&text, opts)
}

/// Parses `i j w` lines. Lines starting with `#` are comments, except the
/// directive `# nodes: N`, which fixes the node count and keeps ids as given.
/// Without it, ids are compacted to `0..N` in increasing order.
pub fn parse_edge_list(text: &str, opts: LoadOptions) -> Result<LoadedGraph, GraphError> {
    let mut declared: Option<usize> = None;
    let mut raw: Vec<(u64, u64, i64, usize)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("nodes:") {
                let n = value.trim().parse::<usize>().map_err(|_| {
                    FormatError::new(line_no, format!("invalid node count `{}`", value.trim()))
                })?;
                declared = Some(n);
            }
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(FormatError::new(
                line_no,
                format!("expected `i j w`, found {} fields", tokens.len()),
            )
            .into());
        }
        let id = |t: &str| {
            t.parse::<u64>()
                .map_err(|_| FormatError::new(line_no, format!("invalid node id `{t}`")))
        };
        let w = tokens[2]
            .parse::<i64>()
            .map_err(|_| FormatError::new(line_no, format!("invalid weight `{}`", tokens[2])))?;
        raw.push((id(tokens[0])?, id(tokens[1])?, w, line_no));
    }

    let (n, id_map, edges): (usize, Vec<u64>, Vec<_>) = match declared {
        Some(n) => {
            let mut edges = Vec::with_capacity(raw.len());
            for &(a, b, w, line) in &raw {
                for node in [a, b] {
                    if node >= n as u64 {
                        return Err(GraphError::NodeOutOfRange {
                            node,
                            n,
                            at: super::Location(Some(line)),
                        });
                    }
                }
                edges.push((a as usize, b as usize, w, Some(line)));
            }
            (n, (0..n as u64).collect(), edges)
        }
        None => {
            let mut ids: Vec<u64> = raw.iter().flat_map(|&(a, b, _, _)| [a, b]).collect();
            ids.sort_unstable();
            ids.dedup();
            let compact = |x: u64| ids.binary_search(&x).expect("id collected above");
            let edges = raw
                .iter()
                .map(|&(a, b, w, line)| (compact(a), compact(b), w, Some(line)))
                .collect();
            (ids.len(), ids, edges)
        }
    };
    let graph = SignedGraph::build(n, edges)?;
    let graph = if opts.binarize { graph.binarized() } else { graph };
    Ok(LoadedGraph { graph, id_map })
}

/// Edge list with a `# nodes:` directive, so reloading preserves ids exactly.
pub fn write_edge_list(g: &SignedGraph) -> String {
    let mut out = format!("# nodes: {}\n", g.node_count());
    for e in g.edges() {
        let _ = writeln!(out, "{}\t{}\t{}", e.i, e.j, e.weight);
    }
    out
}

const SPLIT_MAGIC: &str = "sgaae-split v1";

/// Split manifest: header (seed, fraction, node count) followed by the
/// `TRAIN`, `TEST_POS`, `TEST_NEG` and `TEST_ZERO` sections.
pub fn write_split(split: &EdgeSplit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{SPLIT_MAGIC}");
    let _ = writeln!(out, "seed {}", split.seed);
    let _ = writeln!(out, "fraction {}", split.fraction);
    let _ = writeln!(out, "nodes {}", split.train_graph.node_count());
    let _ = writeln!(out, "TRAIN {}", split.train_graph.edges().len());
    for e in split.train_graph.edges() {
        let _ = writeln!(out, "{} {} {}", e.i, e.j, e.weight);
    }
    for (name, pairs) in [
        ("TEST_POS", &split.test_pos),
        ("TEST_NEG", &split.test_neg),
        ("TEST_ZERO", &split.test_zero),
    ] {
        let _ = writeln!(out, "{name} {}", pairs.len());
        for (i, j) in pairs {
            let _ = writeln!(out, "{i} {j}");
        }
    }
    out
}

pub fn read_split(path: impl AsRef<Path>) -> Result<EdgeSplit, GraphError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_split(&text)
}

pub fn parse_split(text: &str) -> Result<EdgeSplit, GraphError> {
    let mut r = LineReader::new(text);
    let magic = r.expect_line("split header")?;
    if magic != SPLIT_MAGIC {
        return Err(r.error(format!("expected `{SPLIT_MAGIC}`")).into());
    }
    let seed: u64 = r.expect_field("seed")?;
    let fraction: f64 = r.expect_field("fraction")?;
    let nodes: usize = r.expect_field("nodes")?;
    let train_len: usize = r.expect_field("TRAIN")?;
    let mut train = Vec::with_capacity(train_len);
    for _ in 0..train_len {
        let v: Vec<i64> = r.expect_values("TRAIN edge")?;
        if v.len() != 3 || v[0] < 0 || v[1] < 0 {
            return Err(r.error("expected `i j w`").into());
        }
        train.push((v[0] as usize, v[1] as usize, v[2], Some(r.line_number())));
    }
    let train_graph = SignedGraph::build(nodes, train)?;
    let mut section = |name: &str| -> Result<Vec<(usize, usize)>, GraphError> {
        let len: usize = r.expect_field(name)?;
        let mut pairs = Vec::with_capacity(len);
        for _ in 0..len {
            let v: Vec<usize> = r.expect_values(name)?;
            if v.len() != 2 || v[0] >= nodes || v[1] >= nodes {
                return Err(r.error(format!("{name}: expected a node pair below {nodes}")).into());
            }
            pairs.push((v[0], v[1]));
        }
        Ok(pairs)
    };
    let test_pos = section("TEST_POS")?;
    let test_neg = section("TEST_NEG")?;
    let test_zero = section("TEST_ZERO")?;
    Ok(EdgeSplit {
        train_graph,
        test_pos,
        test_neg,
        test_zero,
        seed,
        fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_file() {
        let g = parse_edge_list("0 1 1\n1 2 -1", LoadOptions::default()).unwrap().graph;
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.positive_edge_count(), 1);
        assert_eq!(g.negative_edge_count(), 1);
    }

    #[test]
    fn self_loop_reports_line() {
        let err = parse_edge_list("# c\n0 1 1\n3 3 1\n", LoadOptions::default()).unwrap_err();
        match err {
            GraphError::SelfLoop { at, .. } => assert_eq!(at.0, Some(3)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn parse_errors_report_line() {
        let err = parse_edge_list("0 1 1\n0 x 1\n", LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_edge_list("0 1\n", LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        let err = parse_edge_list("0 1 0\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, GraphError::ZeroWeight { .. }));
        let err = parse_edge_list("0 1 2\n1 0 -2\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, GraphError::ConflictingEdge { .. }));
    }

    #[test]
    fn sparse_ids_are_compacted() {
        let loaded = parse_edge_list("10 200 1\n200 35 -3\n", LoadOptions::default()).unwrap();
        assert_eq!(loaded.id_map, vec![10, 35, 200]);
        assert_eq!(loaded.graph.weight(0, 2), 1);
        assert_eq!(loaded.graph.weight(1, 2), -3);
        assert!(!loaded.ids_unchanged());
        let bin = parse_edge_list("10 200 1\n200 35 -3\n", LoadOptions { binarize: true }).unwrap();
        assert_eq!(bin.graph.weight(1, 2), -1);
    }

    #[test]
    fn nodes_directive_keeps_isolated_nodes() {
        let g = SignedGraph::new(6, [(1, 4, 2), (0, 1, -1)]).unwrap();
        let text = write_edge_list(&g);
        let back = parse_edge_list(&text, LoadOptions::default()).unwrap();
        assert!(back.ids_unchanged());
        assert_eq!(back.graph, g);
        let err = parse_edge_list("# nodes: 2\n0 5 1\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, GraphError::NodeOutOfRange { node: 5, .. }));
    }
}
