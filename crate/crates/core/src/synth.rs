//! Planted signed networks with 1-level and 2-level polarization.
//!
//! [`generate_two_level`] walks the pairs `i < j` in row-major order and, per
//! pair, draws a positive edge with probability `P+[s+_i, s+_j]`; when that
//! fails it flips an `alpha` coin to decide whether the negative edge is
//! drawn from `P-_1` over the positive communities or from `P-_2` over the
//! independent negative communities. Each test consumes one uniform variate
//! from a `ChaCha8` stream seeded with `seed`, so the output is fixed by the
//! config.

use crate::graph::{GraphError, SignedGraph};
use crate::textio::{FormatError, LineReader};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("{matrix}[{row},{col}] = {value} is not a probability")]
    BadProbability {
        matrix: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("{0} is not symmetric")]
    Asymmetric(&'static str),
    #[error("{matrix} is {rows}x{cols}, expected {want}x{want}")]
    MatrixShape {
        matrix: &'static str,
        rows: usize,
        cols: usize,
        want: usize,
    },
    #[error("{which} has {len} labels for {nodes} nodes")]
    LengthMismatch {
        which: &'static str,
        len: usize,
        nodes: usize,
    },
    #[error("alpha = {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("positive and negative thresholds overlap: {pos} + {neg} > 1")]
    ThresholdOverlap { pos: f64, neg: f64 },
    #[error("unknown preset `{0}` (expected two-level, one-level or two-community)")]
    UnknownPreset(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n: usize,
    pub sigma_pos: Vec<usize>,
    pub sigma_neg: Vec<usize>,
    /// Over positive communities.
    pub p_pos: Array2<f64>,
    /// 1-level negative probabilities, over positive communities.
    pub p_neg_1: Array2<f64>,
    /// 2-level negative probabilities, over negative communities.
    pub p_neg_2: Array2<f64>,
    pub alpha: f64,
    pub seed: u64,
}

/// A generated graph with the labels that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedGraph {
    pub graph: SignedGraph,
    pub config: GeneratorConfig,
}

/// Named demonstration settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 600 nodes, alpha = 0.05: negatives mostly follow their own communities.
    TwoLevel,
    /// 600 nodes, alpha = 0.95: negatives mostly fall across positive communities.
    OneLevel,
    /// 100 nodes, two positive communities, no negative edges.
    TwoCommunity,
}

impl FromStr for Preset {
    type Err = GeneratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "two-level" => Ok(Preset::TwoLevel),
            "one-level" => Ok(Preset::OneLevel),
            "two-community" => Ok(Preset::TwoCommunity),
            other => Err(GeneratorError::UnknownPreset(other.to_string())),
        }
    }
}

impl Preset {
    pub fn config(self, seed: u64) -> GeneratorConfig {
        match self {
            Preset::TwoLevel => GeneratorConfig::polarized(600, 3, 3, 0.05, seed),
            Preset::OneLevel => GeneratorConfig::polarized(600, 3, 3, 0.95, seed),
            Preset::TwoCommunity => GeneratorConfig::two_community(100, seed),
        }
    }
}

/// `k x k` matrix with `within` on the diagonal and `across` elsewhere.
pub fn block_matrix(k: usize, within: f64, across: f64) -> Array2<f64> {
    Array2::from_shape_fn((k, k), |(a, b)| if a == b { within } else { across })
}

/// Contiguous, near-equal blocks: node `i` gets label `i * k / n`.
pub fn block_labels(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| i * k / n).collect()
}

/// Block labels in an order shuffled by `rng`.
pub fn shuffled_labels(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels = block_labels(n, k);
    labels.shuffle(rng);
    labels
}

/// Stream for label draws, kept apart from the edge-draw stream.
fn label_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

impl GeneratorConfig {
    /// `k_pos` block positive communities and `k_neg` independently shuffled
    /// negative communities. `P+` is 0.2 within / 0.01 across, `P-_1` puts
    /// 0.3 across positive communities and 0.01 within, `P-_2` is 0.3 within
    /// / 0.01 across.
    pub fn polarized(n: usize, k_pos: usize, k_neg: usize, alpha: f64, seed: u64) -> Self {
        GeneratorConfig {
            n,
            sigma_pos: block_labels(n, k_pos),
            sigma_neg: shuffled_labels(n, k_neg, &mut label_rng(seed)),
            p_pos: block_matrix(k_pos, 0.2, 0.01),
            p_neg_1: block_matrix(k_pos, 0.01, 0.3),
            p_neg_2: block_matrix(k_neg, 0.3, 0.01),
            alpha,
            seed,
        }
    }

    /// Two equal positive communities, `P+` 0.2 within and 0 across, and no
    /// negative edges.
    pub fn two_community(n: usize, seed: u64) -> Self {
        GeneratorConfig {
            n,
            sigma_pos: block_labels(n, 2),
            sigma_neg: vec![0; n],
            p_pos: block_matrix(2, 0.2, 0.0),
            p_neg_1: block_matrix(2, 0.0, 0.0),
            p_neg_2: block_matrix(1, 0.0, 0.0),
            alpha: 0.0,
            seed,
        }
    }

    pub fn k_pos(&self) -> usize {
        self.p_pos.nrows()
    }

    pub fn k_neg(&self) -> usize {
        self.p_neg_2.nrows()
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(GeneratorError::BadAlpha(self.alpha));
        }
        let k_pos = self.p_pos.nrows();
        let k_neg = self.p_neg_2.nrows();
        check_matrix("p_pos", &self.p_pos, k_pos)?;
        check_matrix("p_neg_1", &self.p_neg_1, k_pos)?;
        check_matrix("p_neg_2", &self.p_neg_2, k_neg)?;
        check_labels("sigma_pos", &self.sigma_pos, self.n, k_pos)?;
        check_labels("sigma_neg", &self.sigma_neg, self.n, k_neg)?;
        Ok(())
    }

    pub fn generate(&self) -> Result<PlantedGraph, GeneratorError> {
        generate_two_level(self)
    }
}

fn check_matrix(name: &'static str, m: &Array2<f64>, k: usize) -> Result<(), GeneratorError> {
    if m.dim() != (k, k) {
        return Err(GeneratorError::MatrixShape {
            matrix: name,
            rows: m.nrows(),
            cols: m.ncols(),
            want: k,
        });
    }
    for ((row, col), &value) in m.indexed_iter() {
        if !(0.0..=1.0).contains(&value) {
            return Err(GeneratorError::BadProbability {
                matrix: name,
                row,
                col,
                value,
            });
        }
        if m[[col, row]] != value {
            return Err(GeneratorError::Asymmetric(name));
        }
    }
    Ok(())
}

fn check_labels(name: &'static str, labels: &[usize], n: usize, k: usize) -> Result<(), GeneratorError> {
    if labels.len() != n {
        return Err(GeneratorError::LengthMismatch {
            which: name,
            len: labels.len(),
            nodes: n,
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(GeneratorError::Format(FormatError::new(
            0,
            format!("{name} label {bad} outside 0..{k}"),
        )));
    }
    Ok(())
}

pub fn generate_two_level(cfg: &GeneratorConfig) -> Result<PlantedGraph, GeneratorError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (sp, sn) = (&cfg.sigma_pos, &cfg.sigma_neg);
    let mut edges = Vec::new();
    for i in 0..cfg.n {
        for j in i + 1..cfg.n {
            if rng.random::<f64>() < cfg.p_pos[[sp[i], sp[j]]] {
                edges.push((i, j, 1));
                continue;
            }
            let p = if rng.random::<f64>() < cfg.alpha {
                cfg.p_neg_1[[sp[i], sp[j]]]
            } else {
                cfg.p_neg_2[[sn[i], sn[j]]]
            };
            if rng.random::<f64>() < p {
                edges.push((i, j, -1));
            }
        }
    }
    Ok(PlantedGraph {
        graph: SignedGraph::new(cfg.n, edges)?,
        config: cfg.clone(),
    })
}

/// One pass of the two-threshold generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Pass {
    pub sigma: Vec<usize>,
    pub p_in_pos: f64,
    pub p_in_neg: f64,
    pub p_out_pos: f64,
    pub p_out_neg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupplementaryConfig {
    pub n: usize,
    /// Usually two passes, over the positive then the negative assignment.
    pub passes: Vec<Pass>,
    pub seed: u64,
}

/// Result of [`generate_supplementary`] with the number of pairs that both
/// passes hit with opposite signs.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplementaryGraph {
    pub graph: SignedGraph,
    pub conflicts: usize,
}

/// For each pass and each pair `i < j`, one uniform `r`: `+1` if
/// `r < p+`, else `-1` if `r < p+ + p-`, with `in`/`out` probabilities by
/// whether the pair shares a label. A pair marked with both signs ends up
/// negative; the count of such pairs is returned and logged.
pub fn generate_supplementary(cfg: &SupplementaryConfig) -> Result<SupplementaryGraph, GeneratorError> {
    for pass in &cfg.passes {
        if pass.sigma.len() != cfg.n {
            return Err(GeneratorError::LengthMismatch {
                which: "sigma",
                len: pass.sigma.len(),
                nodes: cfg.n,
            });
        }
        for (pos, neg) in [(pass.p_in_pos, pass.p_in_neg), (pass.p_out_pos, pass.p_out_neg)] {
            for (row, value) in [(0, pos), (1, neg)] {
                if !(0.0..=1.0).contains(&value) {
                    return Err(GeneratorError::BadProbability {
                        matrix: "pass",
                        row,
                        col: 0,
                        value,
                    });
                }
            }
            if pos + neg > 1.0 {
                return Err(GeneratorError::ThresholdOverlap { pos, neg });
            }
        }
    }
    let n = cfg.n;
    let pairs = n * n.saturating_sub(1) / 2;
    // Bit 0: marked positive, bit 1: marked negative.
    let mut marks = vec![0u8; pairs];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for pass in &cfg.passes {
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                let same = pass.sigma[i] == pass.sigma[j];
                let (pp, pn) = if same {
                    (pass.p_in_pos, pass.p_in_neg)
                } else {
                    (pass.p_out_pos, pass.p_out_neg)
                };
                let r: f64 = rng.random();
                if r < pp {
                    marks[k] |= 1;
                } else if r < pp + pn {
                    marks[k] |= 2;
                }
                k += 1;
            }
        }
    }
    let mut edges = Vec::new();
    let mut conflicts = 0;
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            match marks[k] {
                1 => edges.push((i, j, 1)),
                2 => edges.push((i, j, -1)),
                3 => {
                    conflicts += 1;
                    edges.push((i, j, -1));
                }
                _ => {}
            }
            k += 1;
        }
    }
    if conflicts > 0 {
        log::info!("{conflicts} pairs drew both signs; kept as negative");
    }
    Ok(SupplementaryGraph {
        graph: SignedGraph::new(n, edges)?,
        conflicts,
    })
}

/// Node ids stably sorted by `(sigma[i], i)`: entry `k` is the node placed
/// at position `k`.
pub fn reorder_by_assignment(g: &SignedGraph, sigma: &[usize]) -> Result<Vec<usize>, GeneratorError> {
    if sigma.len() != g.node_count() {
        return Err(GeneratorError::LengthMismatch {
            which: "sigma",
            len: sigma.len(),
            nodes: g.node_count(),
        });
    }
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by_key(|&i| sigma[i]);
    Ok(order)
}

fn write_labels_line(out: &mut String, key: &str, labels: &[usize]) {
    out.push_str(key);
    for l in labels {
        let _ = write!(out, " {l}");
    }
    out.push('\n');
}

fn write_inline_matrix(out: &mut String, key: &str, m: &Array2<f64>) {
    let rows: Vec<String> = m
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
        .collect();
    let _ = writeln!(out, "{key} {}", rows.join("; "));
}

/// Config file text. Matrices are written inline with `;` between rows.
pub fn write_config(cfg: &GeneratorConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "nodes {}", cfg.n);
    let _ = writeln!(out, "alpha {}", cfg.alpha);
    let _ = writeln!(out, "seed {}", cfg.seed);
    write_labels_line(&mut out, "sigma_pos", &cfg.sigma_pos);
    write_labels_line(&mut out, "sigma_neg", &cfg.sigma_neg);
    write_inline_matrix(&mut out, "p_pos", &cfg.p_pos);
    write_inline_matrix(&mut out, "p_neg_1", &cfg.p_neg_1);
    write_inline_matrix(&mut out, "p_neg_2", &cfg.p_neg_2);
    out
}

enum LabelSpec {
    Explicit(Vec<usize>),
    Blocks(usize),
    Shuffled(usize),
}

/// Parses a config file. Keys may appear in any order:
///
/// ```text
/// nodes 600
/// alpha 0.05
/// seed 3
/// sigma_pos blocks 3        # or: shuffled 3, or an explicit label list
/// sigma_neg shuffled 3
/// p_pos 0.2 0.01; 0.01 0.2  # rows separated by `;`
/// p_neg_1 ...
/// p_neg_2 ...
/// ```
///
/// `seed` may be omitted and supplied by the caller through `seed_override`;
/// an override always wins.
pub fn parse_config(text: &str, seed_override: Option<u64>) -> Result<GeneratorConfig, GeneratorError> {
    let mut r = LineReader::new(text);
    let mut n = None;
    let mut alpha = None;
    let mut seed = None;
    let mut sigma_pos = None;
    let mut sigma_neg = None;
    let mut p_pos = None;
    let mut p_neg_1 = None;
    let mut p_neg_2 = None;
    while let Some(line) = r.next_line() {
        let line = line.split('#').next().unwrap_or("").trim();
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let bad = |what: &str| r.error(format!("invalid {what} `{rest}`"));
        match key {
            "nodes" => n = Some(rest.parse::<usize>().map_err(|_| bad("node count"))?),
            "alpha" => alpha = Some(rest.parse::<f64>().map_err(|_| bad("alpha"))?),
            "seed" => seed = Some(rest.parse::<u64>().map_err(|_| bad("seed"))?),
            "sigma_pos" | "sigma_neg" => {
                let mut words = rest.split_whitespace();
                let spec = match words.next() {
                    Some("blocks") => LabelSpec::Blocks(words.next().and_then(|w| w.parse().ok()).ok_or_else(|| bad("label spec"))?),
                    Some("shuffled") => LabelSpec::Shuffled(words.next().and_then(|w| w.parse().ok()).ok_or_else(|| bad("label spec"))?),
                    _ => LabelSpec::Explicit(crate::textio::parse_tokens(rest).map_err(|_| bad("labels"))?),
                };
                if key == "sigma_pos" {
                    sigma_pos = Some(spec);
                } else {
                    sigma_neg = Some(spec);
                }
            }
            "p_pos" | "p_neg_1" | "p_neg_2" => {
                let rows: Result<Vec<Vec<f64>>, _> =
                    rest.split(';').map(crate::textio::parse_tokens::<f64>).collect();
                let rows = rows.map_err(|_| bad("matrix"))?;
                let k = rows.len();
                if rows.iter().any(|row| row.len() != k) {
                    return Err(r.error(format!("{key} must be square")).into());
                }
                let m = Array2::from_shape_vec((k, k), rows.concat()).expect("square");
                match key {
                    "p_pos" => p_pos = Some(m),
                    "p_neg_1" => p_neg_1 = Some(m),
                    _ => p_neg_2 = Some(m),
                }
            }
            other => return Err(r.error(format!("unknown key `{other}`")).into()),
        }
    }
    let missing = |key: &str| GeneratorError::Format(FormatError::new(r.line_number(), format!("missing `{key}`")));
    let n = n.ok_or_else(|| missing("nodes"))?;
    let seed = seed_override.or(seed).ok_or_else(|| missing("seed"))?;
    let mut rng = label_rng(seed);
    let mut resolve = |spec: LabelSpec| match spec {
        LabelSpec::Explicit(v) => v,
        LabelSpec::Blocks(k) => block_labels(n, k),
        LabelSpec::Shuffled(k) => shuffled_labels(n, k, &mut rng),
    };
    let cfg = GeneratorConfig {
        n,
        sigma_pos: resolve(sigma_pos.ok_or_else(|| missing("sigma_pos"))?),
        sigma_neg: resolve(sigma_neg.ok_or_else(|| missing("sigma_neg"))?),
        p_pos: p_pos.ok_or_else(|| missing("p_pos"))?,
        p_neg_1: p_neg_1.ok_or_else(|| missing("p_neg_1"))?,
        p_neg_2: p_neg_2.ok_or_else(|| missing("p_neg_2"))?,
        alpha: alpha.ok_or_else(|| missing("alpha"))?,
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: impl AsRef<Path>, seed_override: Option<u64>) -> Result<GeneratorConfig, GeneratorError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GeneratorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, seed_override)
}

/// Labels sidecar: one `sigma_pos<TAB>sigma_neg` line per node.
pub fn write_labels(cfg: &GeneratorConfig) -> String {
    let mut out = String::from("# sigma_pos\tsigma_neg\n");
    for (a, b) in cfg.sigma_pos.iter().zip(&cfg.sigma_neg) {
        let _ = writeln!(out, "{a}\t{b}");
    }
    out
}

/// Inverse of [`write_labels`]: `(sigma_pos, sigma_neg)`.
pub fn parse_labels(text: &str) -> Result<(Vec<usize>, Vec<usize>), FormatError> {
    let mut r = LineReader::new(text);
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    while let Some(line) = r.next_line() {
        let v: Vec<usize> = crate::textio::parse_tokens(line).map_err(|t| r.error(format!("invalid label `{t}`")))?;
        if v.len() != 2 {
            return Err(r.error("expected two labels"));
        }
        pos.push(v[0]);
        neg.push(v[1]);
    }
    Ok((pos, neg))
}
