//! Eigenvector features of the signed normalized Laplacian
//! `L = I - D^{-1/2} Y D^{-1/2}`, `D` the absolute degree.
//!
//! The spectrum of `L` lies in `[0, 2]`. The low end is reached by running
//! Lanczos on `2I - L`, the high end on `L` itself, so both are a search for
//! the largest eigenvalues of a positive semidefinite operator.

use crate::graph::SignedGraph;
use crate::sparse::CsrMatrix;
use crate::textio::{write_matrix, write_reals, FormatError, LineReader};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

/// Name of the Laplacian definition, recorded in feature files.
pub const LAPLACIAN_TAG: &str = "signed-sym-absdeg";

const MAX_RESTARTS: usize = 50;
const FEATURES_MAGIC: &str = "sgaae-features v1";

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("requested {dim} eigenpairs from a {nodes}-node graph; need 1 <= d < N")]
    BadDimension { dim: usize, nodes: usize },
    #[error("Lanczos did not converge: {converged} of {wanted} pairs, worst residual {worst_residual:e}")]
    NoConvergence {
        wanted: usize,
        converged: usize,
        worst_residual: f64,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Which end of the spectrum supplies the features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigEnd {
    #[default]
    Low,
    High,
}

impl fmt::Display for EigEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EigEnd::Low => "low",
            EigEnd::High => "high",
        })
    }
}

impl FromStr for EigEnd {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(EigEnd::Low),
            "high" => Ok(EigEnd::High),
            other => Err(format!("unknown spectrum end `{other}` (expected low or high)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub dim: usize,
    /// Seeds the Lanczos start vectors.
    pub seed: u64,
    /// Residual bound `||L v - mu v||` for every returned pair.
    pub tol: f64,
    pub eig_end: EigEnd,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            dim: 32,
            seed: 0,
            tol: 1e-9,
            eig_end: EigEnd::Low,
        }
    }
}

/// `N x d` eigenvector matrix with its eigenvalues in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub matrix: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub seed: u64,
    pub eig_end: EigEnd,
}

impl NodeFeatures {
    pub fn node_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Largest deviation of `F^T F` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.matrix.t().dot(&self.matrix);
        let mut worst = 0.0f64;
        for ((r, c), &v) in gram.indexed_iter() {
            let want = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((v - want).abs());
        }
        worst
    }

    /// Largest column residual `||L v_k - mu_k v_k||`.
    pub fn max_residual(&self, laplacian: &CsrMatrix) -> f64 {
        let mut worst = 0.0f64;
        for (k, col) in self.matrix.columns().into_iter().enumerate() {
            let v = col.to_vec();
            let lv = laplacian.mul_vec(&v);
            let r: f64 = lv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - self.eigenvalues[k] * b).powi(2))
                .sum();
            worst = worst.max(r.sqrt());
        }
        worst
    }
}

/// `L = I - D^{-1/2} Y D^{-1/2}` with `D_ii = sum_j |Y_ij|`. Isolated nodes
/// keep their identity row.
pub fn signed_normalized_laplacian(g: &SignedGraph) -> CsrMatrix {
    let n = g.node_count();
    let inv_sqrt: Vec<f64> = g
        .abs_degree()
        .iter()
        .map(|&d| if d > 0 { 1.0 / (d as f64).sqrt() } else { 0.0 })
        .collect();
    let mut triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
    for e in g.edges() {
        let v = -(e.weight as f64) * inv_sqrt[e.i] * inv_sqrt[e.j];
        triplets.push((e.i, e.j, v));
        triplets.push((e.j, e.i, v));
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// The `d` eigenpairs of smallest eigenvalue.
pub fn smallest_eigenpairs(l: &CsrMatrix, d: usize, tol: f64, seed: u64) -> Result<NodeFeatures, SpectralError> {
    eigenpairs(l, d, tol, seed, EigEnd::Low)
}

/// The `d` eigenpairs of largest eigenvalue.
pub fn largest_eigenpairs(l: &CsrMatrix, d: usize, tol: f64, seed: u64) -> Result<NodeFeatures, SpectralError> {
    eigenpairs(l, d, tol, seed, EigEnd::High)
}

/// Spectral features of `g`. `cfg.dim` is capped at `N - 1`.
pub fn node_features(g: &SignedGraph, cfg: &FeatureConfig) -> Result<NodeFeatures, SpectralError> {
    let n = g.node_count();
    let mut dim = cfg.dim;
    if dim >= n {
        dim = n.saturating_sub(1);
        log::warn!("feature dimension {} reduced to {dim} for a {n}-node graph", cfg.dim);
    }
    let l = signed_normalized_laplacian(g);
    eigenpairs(&l, dim, cfg.tol, cfg.seed, cfg.eig_end)
}

fn eigenpairs(l: &CsrMatrix, d: usize, tol: f64, seed: u64, end: EigEnd) -> Result<NodeFeatures, SpectralError> {
    let n = l.rows();
    if d == 0 || d >= n {
        return Err(SpectralError::BadDimension { dim: d, nodes: n });
    }
    let op = |x: &[f64], y: &mut [f64]| {
        let lx = l.mul_vec(x);
        match end {
            EigEnd::Low => y.iter_mut().zip(x.iter().zip(&lx)).for_each(|(o, (a, b))| *o = 2.0 * a - b),
            EigEnd::High => y.copy_from_slice(&lx),
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = top_eigenpairs(&op, n, d, tol, &[], &mut rng)?;

    // A single Krylov run can miss copies of a repeated eigenvalue. Search
    // the deflated complement for anything larger than the current d-th
    // value and swap it in.
    for _ in 0..d {
        let locked: Vec<Vec<f64>> = pairs.iter().map(|p| p.vector.clone()).collect();
        if locked.len() >= n {
            break;
        }
        let extra = top_eigenpairs(&op, n, 1, tol, &locked, &mut rng)?;
        let smallest = pairs.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
        match extra.into_iter().next() {
            Some(p) if p.value > smallest + 1e-10 => {
                let at = pairs
                    .iter()
                    .rposition(|q| q.value == smallest)
                    .expect("smallest comes from pairs");
                pairs[at] = p;
            }
            _ => break,
        }
    }

    let mut cols: Vec<(f64, Vec<f64>)> = pairs
        .into_iter()
        .map(|p| {
            let mu = match end {
                EigEnd::Low => 2.0 - p.value,
                EigEnd::High => p.value,
            };
            (mu, p.vector)
        })
        .collect();
    cols.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut matrix = Array2::zeros((n, d));
    let mut eigenvalues = Vec::with_capacity(d);
    for (k, (mu, mut v)) in cols.into_iter().enumerate() {
        canonicalize_sign(&mut v);
        for (i, x) in v.into_iter().enumerate() {
            matrix[[i, k]] = x;
        }
        eigenvalues.push(mu);
    }
    Ok(NodeFeatures {
        matrix,
        eigenvalues,
        seed,
        eig_end: end,
    })
}

/// Flips `v` so that its largest-magnitude entry is positive; near-ties go
/// to the lowest index.
fn canonicalize_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(lead) = v.iter().find(|x| x.abs() >= max * (1.0 - 1e-9)) {
        if *lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

struct Pair {
    value: f64,
    vector: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Two passes of classical Gram-Schmidt against every vector in `sets`.
fn orthogonalize(w: &mut [f64], sets: &[&[Vec<f64>]]) {
    for _ in 0..2 {
        for set in sets {
            for q in set.iter() {
                let c = dot(w, q);
                axpy(-c, q, w);
            }
        }
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Thick-restart Lanczos with full reorthogonalization: the `k` largest
/// eigenpairs of the symmetric operator `op` on the orthogonal complement of
/// `deflate`.
///
/// Each cycle grows the basis to `m` vectors, solves the projected problem
/// `V^T (op V)` and, if some of the leading `k` residuals are still above
/// `tol`, restarts from the leading Ritz vectors plus the next Krylov
/// direction.
fn top_eigenpairs(
    op: &dyn Fn(&[f64], &mut [f64]),
    n: usize,
    k: usize,
    tol: f64,
    deflate: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Pair>, SpectralError> {
    let avail = n - deflate.len();
    let m = avail.min((3 * k).max(k + 40));
    let keep = (k + (m - k) / 2).min(m.saturating_sub(1)).max(k.min(m));
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut next = random_unit(n, rng);
    orthogonalize(&mut next, &[deflate]);
    let s = norm(&next);
    next.iter_mut().for_each(|x| *x /= s);
    let mut worst_residual = f64::INFINITY;
    let mut converged = 0;

    for _restart in 0..=MAX_RESTARTS {
        let mut exhausted = false;
        while basis.len() < m {
            let mut av = vec![0.0; n];
            op(&next, &mut av);
            basis.push(std::mem::take(&mut next));
            let mut f = av.clone();
            images.push(av);
            orthogonalize(&mut f, &[deflate, &basis]);
            let mut beta = norm(&f);
            if beta <= 1e-10 {
                // Invariant subspace: continue from a fresh direction.
                f = random_unit(n, rng);
                orthogonalize(&mut f, &[deflate, &basis]);
                beta = norm(&f);
                if beta < 1e-8 {
                    exhausted = true;
                    break;
                }
            }
            f.iter_mut().for_each(|x| *x /= beta);
            next = f;
        }

        let dim = basis.len();
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let combine = |set: &[Vec<f64>], idx: usize| {
            let mut y = vec![0.0; n];
            for (c, q) in eig.eigenvectors.column(idx).iter().zip(set) {
                axpy(*c, q, &mut y);
            }
            y
        };
        let retained = if exhausted { dim } else { keep.min(dim) };
        let mut new_basis = Vec::with_capacity(m);
        let mut new_images = Vec::with_capacity(m);
        let mut pairs = Vec::with_capacity(k);
        worst_residual = 0.0;
        converged = 0;
        for (rank, &idx) in order.iter().take(retained).enumerate() {
            let y = combine(&basis, idx);
            let ay = combine(&images, idx);
            if rank < k {
                let theta = eig.eigenvalues[idx];
                let res = ay
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - theta * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst_residual = worst_residual.max(res);
                if res <= tol {
                    converged += 1;
                }
                pairs.push(Pair {
                    value: theta,
                    vector: y.clone(),
                });
            }
            new_basis.push(y);
            new_images.push(ay);
        }
        if pairs.len() == k && converged == k {
            return Ok(pairs);
        }
        if exhausted {
            break;
        }
        basis = new_basis;
        images = new_images;
    }
    Err(SpectralError::NoConvergence {
        wanted: k,
        converged,
        worst_residual,
    })
}

/// Feature file: a short header followed by the eigenvalues and the matrix.
pub fn write_features(f: &NodeFeatures) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FEATURES_MAGIC}");
    let _ = writeln!(out, "nodes {}", f.node_count());
    let _ = writeln!(out, "dim {}", f.dim());
    let _ = writeln!(out, "seed {}", f.seed);
    let _ = writeln!(out, "laplacian {LAPLACIAN_TAG}");
    let _ = writeln!(out, "eig_end {}", f.eig_end);
    out.push_str("eigenvalues ");
    write_reals(&mut out, f.eigenvalues.iter().copied());
    write_matrix(&mut out, "features", &f.matrix);
    out
}

pub fn parse_features(text: &str) -> Result<NodeFeatures, SpectralError> {
    let mut r = LineReader::new(text);
    if r.expect_line("features header")? != FEATURES_MAGIC {
        return Err(r.error(format!("expected `{FEATURES_MAGIC}`")).into());
    }
    let nodes: usize = r.expect_field("nodes")?;
    let dim: usize = r.expect_field("dim")?;
    let seed: u64 = r.expect_field("seed")?;
    let tag: String = r.expect_field("laplacian")?;
    if tag != LAPLACIAN_TAG {
        return Err(r.error(format!("unsupported laplacian `{tag}`")).into());
    }
    let end: String = r.expect_field("eig_end")?;
    let eig_end: EigEnd = end.parse().map_err(|e: String| r.error(e))?;
    let line = r.expect_line("eigenvalues")?;
    let values = line
        .strip_prefix("eigenvalues")
        .ok_or_else(|| r.error("expected `eigenvalues`"))?;
    let eigenvalues: Vec<f64> = crate::textio::parse_tokens(values)
        .map_err(|tok| r.error(format!("invalid eigenvalue `{tok}`")))?;
    let matrix = r.expect_matrix("features")?;
    if matrix.dim() != (nodes, dim) || eigenvalues.len() != dim {
        return Err(r.error(format!("header says {nodes} x {dim}, body disagrees")).into());
    }
    Ok(NodeFeatures {
        matrix,
        eigenvalues,
        seed,
        eig_end,
    })
}

pub fn read_features(path: impl AsRef<Path>) -> Result<NodeFeatures, SpectralError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SpectralError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_features(&text)
}

#[cfg(test)]
pub(crate) mod oracle {
    use ndarray::Array2;

    /// Cyclic Jacobi rotations; eigenvalues ascending.
    pub fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
        let n = a.nrows();
        let mut a = a.clone();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[[i, j]] * a[[i, j]])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[[p, q]].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[[k, p]];
                        let akq = a[[k, q]];
                        a[[k, p]] = c * akp - s * akq;
                        a[[k, q]] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[[p, k]];
                        let aqk = a[[q, k]];
                        a[[p, k]] = c * apk - s * aqk;
                        a[[q, k]] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}
