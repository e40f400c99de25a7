//! Reference implementations shared by the integration tests. None of
//! them call into the library code they check.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgaae::SignedGraph;

/// Counts every positive/negative pair, ties worth one half.
pub fn roc_by_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut total) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            total += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / total
}

/// Sweeps every distinct threshold from the top and sums recall steps
/// times the precision at that threshold.
pub fn pr_by_thresholds(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= t {
                if l {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / n_pos;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    ap
}

/// Random scores on a coarse grid (so ties are common) with both classes present.
pub fn random_scored_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..60);
    let levels = rng.random_range(1..12);
    let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / 3.0).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    (scores, labels)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix: eigenvalues
/// ascending with the matching eigenvectors as columns.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[[i, j]] * a[[i, j]];
                }
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]] == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| a[[x, x]].total_cmp(&a[[y, y]]));
    let values = idx.iter().map(|&i| a[[i, i]]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, idx[c]]]);
    (values, vectors)
}

/// `I - D^{-1/2} Y D^{-1/2}` built densely from the edge list.
pub fn dense_signed_laplacian(g: &SignedGraph) -> Array2<f64> {
    let n = g.node_count();
    let mut y = Array2::<f64>::zeros((n, n));
    for e in g.edges() {
        y[[e.i, e.j]] = e.weight as f64;
        y[[e.j, e.i]] = e.weight as f64;
    }
    let deg: Vec<f64> = (0..n).map(|i| y.row(i).iter().map(|v| v.abs()).sum()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let eye = if i == j { 1.0 } else { 0.0 };
        if deg[i] == 0.0 || deg[j] == 0.0 {
            eye
        } else {
            eye - y[[i, j]] / (deg[i] * deg[j]).sqrt()
        }
    })
}

/// Erdos-Renyi pairs with probability `p`, each edge `+1` or `-1` with equal odds.
pub fn random_signed_graph(n: usize, p: f64, seed: u64) -> SignedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j, if rng.random_bool(0.5) { 1 } else { -1 }));
            }
        }
    }
    SignedGraph::new(n, edges).unwrap()
}

/// Skellam PMF as the convolution of two Poisson PMFs, summed in log space.
pub fn skellam_pmf_by_convolution(y: i64, lp: f64, ln: f64) -> f64 {
    let log_poisson = |k: i64, l: f64| k as f64 * l.ln() - l - ln_factorial(k);
    let start = (-y).max(0);
    let mut total = 0.0;
    for m in start..start + 400 {
        total += (log_poisson(m + y, lp) + log_poisson(m, ln)).exp();
    }
    total
}

fn ln_factorial(k: i64) -> f64 {
    (1..=k).map(|v| (v as f64).ln()).sum()
}

/// `sum_{|y| <= 200} P(y)` and `sum y P(y)`.
pub fn skellam_moments(lp: f64, ln: f64) -> (f64, f64) {
    let (mut mass, mut mean) = (0.0, 0.0);
    for y in -200i64..=200 {
        let p = sgaae::skellam::skellam_log_pmf(y, lp, ln).exp();
        mass += p;
        mean += y as f64 * p;
    }
    (mass, mean)
}

/// Fourth-order central difference of `f` at `x` with step `h`.
pub fn five_point(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Worst relative error between the analytic rate derivatives of the pair
/// loss and finite differences, over `count` random `(y, lp, ln)` triples.
pub fn worst_skellam_gradient_error(count: usize, seed: u64) -> f64 {
    use sgaae::skellam::pair_nll;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let y = rng.random_range(-25i64..=25);
        let lp = 10f64.powf(rng.random_range(-2.0..1.7));
        let ln = 10f64.powf(rng.random_range(-2.0..1.7));
        let g = pair_nll(y, lp, ln);
        let dp = five_point(|v| pair_nll(y, v, ln).loss, lp, 1e-3 * lp);
        let dn = five_point(|v| pair_nll(y, lp, v).loss, ln, 1e-3 * ln);
        worst = worst.max(relative_error(g.d_pos, dp, 1e-3)).max(relative_error(g.d_neg, dn, 1e-3));
    }
    worst
}

/// Graphs of up to 200 nodes for the eigensolver checks: random, planted,
/// a path and a disconnected graph with isolated nodes.
pub fn oracle_graphs() -> Vec<(String, SignedGraph)> {
    let mut out = Vec::new();
    for (n, p, seed) in [(8, 0.5, 1), (30, 0.2, 2), (75, 0.08, 3), (120, 0.05, 4), (200, 0.03, 5), (200, 0.1, 6)] {
        out.push((format!("random n={n} p={p}"), random_signed_graph(n, p, seed)));
    }
    out.push(("two communities".into(), sgaae::synth::GeneratorConfig::two_community(100, 3).generate().unwrap().graph));
    out.push(("polarized".into(), sgaae::synth::GeneratorConfig::polarized(150, 3, 2, 0.5, 4).generate().unwrap().graph));
    let path: Vec<(usize, usize, i64)> = (0..59).map(|i| (i, i + 1, if i % 3 == 0 { -1 } else { 1 })).collect();
    out.push(("signed path".into(), SignedGraph::new(60, path).unwrap()));
    // Two triangles and four isolated nodes.
    let islands = [(0, 1, 1), (1, 2, 1), (0, 2, -1), (3, 4, -1), (4, 5, -1), (3, 5, -1)];
    out.push(("islands".into(), SignedGraph::new(10, islands).unwrap()));
    out
}

pub fn dense_residual(l: &Array2<f64>, v: &[f64], mu: f64) -> f64 {
    let lv = l.dot(&ndarray::ArrayView1::from(v));
    lv.iter().zip(v).map(|(a, b)| (a - mu * b).powi(2)).sum::<f64>().sqrt()
}


/// Worst relative error of the model gradient against central differences
/// with step `h`, over `coords` random coordinates of a `K = 3` model.
pub fn worst_model_gradient_error(g: &SignedGraph, form: sgaae::model::DecoderForm, coords: usize, h: f64, seed: u64) -> f64 {
    use sgaae::model::{loss_and_gradients, EncoderInputs, ModelParameters, PairBatch};
    use sgaae::spectral::{node_features, FeatureConfig};
    let feats = node_features(g, &FeatureConfig { dim: 4, seed, ..Default::default() }).unwrap();
    let inputs = EncoderInputs::new(g, &feats).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParameters::init(4, 6, 3, &mut rng);
    let batch = PairBatch::full(g);
    let t = 0.8;
    let (_, grads) = loss_and_gradients(&inputs, &params, t, &batch, form).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let slot = rng.random_range(0..grads.len());
        let (rows, cols) = grads[slot].dim();
        let at = (rng.random_range(0..rows), rng.random_range(0..cols));
        let eval = |delta: f64| {
            let mut p = params.clone();
            p.tensors_mut()[slot][at] += delta;
            loss_and_gradients(&inputs, &p, t, &batch, form).unwrap().0
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        worst = worst.max(relative_error(grads[slot][at], numeric, 1e-2));
    }
    worst
}
