//! Link-prediction scoring and planted-structure recovery.
//!
//! Three tasks are scored on a held-out split:
//!
//! | task | positives | negatives | score |
//! |------|-----------|-----------|-------|
//! | `p@n` | removed positive links | removed negative links | `log lambda_pos - log lambda_neg` |
//! | `p@z` | removed positive links | sampled non-links | `lambda_pos` |
//! | `n@z` | removed negative links | sampled non-links | `lambda_neg` |
//!
//! AUC-PR is step-wise average precision; tied scores form a single
//! threshold.

use crate::graph::EdgeSplit;
use crate::model::{NodeRepresentation, TrainedModel};
use crate::synth::GeneratorConfig;
use crate::textio::FormatError;
use ndarray::Array2;
use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{task}: needs both classes, got {positives} positive and {negatives} negative instances")]
    SingleClass {
        task: String,
        positives: usize,
        negatives: usize,
    },
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("model was trained on graph {model}, split's training graph is {split}")]
    DigestMismatch { model: String, split: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    PosNeg,
    PosZero,
    NegZero,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::PosNeg, Task::PosZero, Task::NegZero];

    /// Name of the score function used for the task.
    pub fn score_tag(self) -> &'static str {
        match self {
            Task::PosNeg => "log_rate_diff",
            Task::PosZero => "lambda_pos",
            Task::NegZero => "lambda_neg",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::PosNeg => "p@n",
            Task::PosZero => "p@z",
            Task::NegZero => "n@z",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p@n" => Ok(Task::PosNeg),
            "p@z" => Ok(Task::PosZero),
            "n@z" => Ok(Task::NegZero),
            other => Err(format!("unknown task `{other}`")),
        }
    }
}

/// Scores from precomputed log-rates.
pub fn scores_from_log_rates(log_pos: &[f64], log_neg: &[f64], task: Task) -> Vec<f64> {
    match task {
        Task::PosNeg => log_pos.iter().zip(log_neg).map(|(a, b)| a - b).collect(),
        Task::PosZero => log_pos.iter().map(|v| v.exp()).collect(),
        Task::NegZero => log_neg.iter().map(|v| v.exp()).collect(),
    }
}

pub fn score_pairs(model: &TrainedModel, pairs: &[(usize, usize)], task: Task) -> Vec<f64> {
    let (lp, ln) = model.log_rates(pairs);
    scores_from_log_rates(&lp, &ln, task)
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass {
            task: "metric".into(),
            positives: pos,
            negatives: neg,
        });
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score; equal scores stay adjacent.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// `P(s+ > s-) + P(s+ = s-)/2`, via the rank-sum statistic with mid-ranks.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    let mut idx = descending(scores);
    idx.reverse();
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // Ranks start..end (1-based start+1..=end) share their mean.
        let mid = (start + 1 + end) as f64 / 2.0;
        let pos = idx[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += mid * pos as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision `sum_k (R_k - R_{k-1}) P_k` over descending thresholds.
pub fn auc_pr(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    let (n_pos, _) = check(scores, labels)?;
    let idx = descending(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut acc = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let block_tp = idx[start..end].iter().filter(|&&i| labels[i]).count();
        tp += block_tp;
        fp += end - start - block_tp;
        if block_tp > 0 {
            acc += block_tp as f64 * (tp as f64 / (tp + fp) as f64);
        }
        start = end;
    }
    Ok(acc / n_pos as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskMetrics {
    pub task: Task,
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl TaskMetrics {
    /// AUC-PR of a scorer that ranks at random: the positive share.
    pub fn prior_rate(&self) -> f64 {
        self.n_pos as f64 / (self.n_pos + self.n_neg) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// In [`Task::ALL`] order.
    pub tasks: Vec<TaskMetrics>,
    pub seed: u64,
    pub split_digest: String,
}

impl EvalReport {
    pub fn task(&self, task: Task) -> &TaskMetrics {
        self.tasks.iter().find(|t| t.task == task).expect("all tasks present")
    }
}

/// Positive and negative instances of a task.
pub fn task_pairs(split: &EdgeSplit, task: Task) -> (&[(usize, usize)], &[(usize, usize)]) {
    match task {
        Task::PosNeg => (&split.test_pos, &split.test_neg),
        Task::PosZero => (&split.test_pos, &split.test_zero),
        Task::NegZero => (&split.test_neg, &split.test_zero),
    }
}

/// Evaluates an arbitrary scorer over the three tasks of `split`.
pub fn evaluate_with(
    split: &EdgeSplit,
    mut scorer: impl FnMut(&[(usize, usize)], Task) -> Vec<f64>,
) -> Result<EvalReport, EvalError> {
    let mut tasks = Vec::with_capacity(3);
    for task in Task::ALL {
        let (pos, neg) = task_pairs(split, task);
        if pos.is_empty() || neg.is_empty() {
            return Err(EvalError::SingleClass {
                task: task.to_string(),
                positives: pos.len(),
                negatives: neg.len(),
            });
        }
        let mut pairs = pos.to_vec();
        pairs.extend_from_slice(neg);
        let labels: Vec<bool> = (0..pairs.len()).map(|k| k < pos.len()).collect();
        let scores = scorer(&pairs, task);
        tasks.push(TaskMetrics {
            task,
            auc_roc: auc_roc(&scores, &labels)?,
            auc_pr: auc_pr(&scores, &labels)?,
            n_pos: pos.len(),
            n_neg: neg.len(),
        });
    }
    Ok(EvalReport {
        tasks,
        seed: split.seed,
        split_digest: split.digest(),
    })
}

/// Scores `model` on `split`; the model must have been trained on
/// `split.train_graph`.
pub fn evaluate(model: &TrainedModel, split: &EdgeSplit) -> Result<EvalReport, EvalError> {
    let split_graph = split.train_graph.digest();
    if model.graph_digest != split_graph {
        return Err(EvalError::DigestMismatch {
            model: model.graph_digest.clone(),
            split: split_graph,
        });
    }
    evaluate_with(split, |pairs, task| score_pairs(model, pairs, task))
}

const REPORT_MAGIC: &str = "# sgaae-report v1";

/// Header comments, then `task<TAB>metric<TAB>value` records.
pub fn write_report(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{REPORT_MAGIC}");
    let _ = writeln!(out, "# seed {}", r.seed);
    let _ = writeln!(out, "# split_digest {}", r.split_digest);
    let tags: Vec<String> = Task::ALL.iter().map(|t| format!("{t}={}", t.score_tag())).collect();
    let _ = writeln!(out, "# scores {}", tags.join(" "));
    out.push_str("task\tmetric\tvalue\n");
    for t in &r.tasks {
        let _ = writeln!(out, "{}\tauc_roc\t{}", t.task, t.auc_roc);
        let _ = writeln!(out, "{}\tauc_pr\t{}", t.task, t.auc_pr);
        let _ = writeln!(out, "{}\tn_pos\t{}", t.task, t.n_pos);
        let _ = writeln!(out, "{}\tn_neg\t{}", t.task, t.n_neg);
    }
    out
}

pub fn parse_report(text: &str) -> Result<EvalReport, EvalError> {
    let mut seed = None;
    let mut split_digest = None;
    let mut values: HashMap<(Task, String), String> = HashMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |m: String| EvalError::Format(FormatError::new(no + 1, m));
        if let Some(comment) = line.strip_prefix('#') {
            let mut parts = comment.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some("seed"), Some(v)) => seed = Some(v.parse().map_err(|_| err(format!("invalid seed `{v}`")))?),
                (Some("split_digest"), Some(v)) => split_digest = Some(v.to_string()),
                _ => {}
            }
            continue;
        }
        if line.is_empty() || line == "task\tmetric\tvalue" {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(err("expected `task<TAB>metric<TAB>value`".into()));
        }
        let task: Task = f[0].parse().map_err(err)?;
        values.insert((task, f[1].to_string()), f[2].to_string());
    }
    let missing = |what: &str| EvalError::Format(FormatError::new(0, format!("missing {what}")));
    let mut tasks = Vec::new();
    for task in Task::ALL {
        let get = |m: &str| values.get(&(task, m.to_string())).ok_or_else(|| missing(&format!("{task} {m}")));
        let real = |m: &str| -> Result<f64, EvalError> { get(m)?.parse().map_err(|_| missing(&format!("valid {task} {m}"))) };
        let int = |m: &str| -> Result<usize, EvalError> { get(m)?.parse().map_err(|_| missing(&format!("valid {task} {m}"))) };
        tasks.push(TaskMetrics {
            task,
            auc_roc: real("auc_roc")?,
            auc_pr: real("auc_pr")?,
            n_pos: int("n_pos")?,
            n_neg: int("n_neg")?,
        });
    }
    Ok(EvalReport {
        tasks,
        seed: seed.ok_or_else(|| missing("seed"))?,
        split_digest: split_digest.ok_or_else(|| missing("split_digest"))?,
    })
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_report(&text)
}

/// Normalized mutual information, `2 I(a; b) / (H(a) + H(b))`. Two constant
/// labelings score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "label vectors differ in length");
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ca: HashMap<usize, usize> = HashMap::new();
    let mut cb: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
    }
    let entropy = |c: &HashMap<usize, usize>| -> f64 {
        let mut counts: Vec<usize> = c.values().copied().collect();
        counts.sort_unstable();
        -counts.iter().map(|&k| (k as f64 / n) * (k as f64 / n).ln()).sum::<f64>()
    };
    let (ha, hb) = (entropy(&ca), entropy(&cb));
    if ha + hb == 0.0 {
        return 1.0;
    }
    let mut cells: Vec<((usize, usize), usize)> = joint.into_iter().collect();
    cells.sort_unstable();
    let mi: f64 = cells
        .iter()
        .map(|&((x, y), k)| {
            let p = k as f64 / n;
            p * (p * n * n / (ca[&x] as f64 * cb[&y] as f64)).ln()
        })
        .sum();
    (2.0 * mi / (ha + hb)).clamp(0.0, 1.0)
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (k, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// `(NMI(argmax Z, sigma+), NMI(argmax W, sigma-))`.
pub fn membership_recovery(rep: &NodeRepresentation, planted: &GeneratorConfig) -> (f64, f64) {
    (
        nmi(&argmax_rows(&rep.z), &planted.sigma_pos),
        nmi(&argmax_rows(&rep.w), &planted.sigma_neg),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: [f64; 4] = [0.9, 0.8, 0.7, 0.6];
    const L: [bool; 4] = [true, true, false, true];

    #[test]
    fn hand_examples() {
        assert_eq!(auc_roc(&S, &L).unwrap(), 2.0 / 3.0);
        assert_eq!(auc_pr(&S, &L).unwrap(), 2.75 / 3.0);
        assert!((auc_pr(&S, &L).unwrap() - 0.916_67).abs() < 1e-5);
    }

    #[test]
    fn extremes() {
        let l = [true, true, false, false];
        assert_eq!(auc_roc(&[4.0, 3.0, 2.0, 1.0], &l).unwrap(), 1.0);
        assert_eq!(auc_pr(&[4.0, 3.0, 2.0, 1.0], &l).unwrap(), 1.0);
        assert_eq!(auc_roc(&[1.0; 4], &l).unwrap(), 0.5);
        assert_eq!(auc_pr(&[1.0; 4], &l).unwrap(), 0.5);
        assert!(matches!(auc_roc(&[1.0, 2.0], &[true, true]), Err(EvalError::SingleClass { .. })));
        assert!(matches!(auc_pr(&[1.0], &[true, false]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn equal_rates_are_indifferent() {
        assert_eq!(scores_from_log_rates(&[0.3], &[0.3], Task::PosNeg), vec![0.0]);
    }

    #[test]
    fn nmi_properties() {
        let a = [0, 0, 1, 1, 2, 2];
        assert!((nmi(&a, &a) - 1.0).abs() < 1e-15);
        let relabeled = [5, 5, 0, 0, 3, 3];
        assert!((nmi(&a, &relabeled) - 1.0).abs() < 1e-15);
        let b = [0, 1, 0, 1, 0, 1];
        assert!(nmi(&a, &b).abs() < 1e-15);
        assert_eq!(nmi(&[0, 0], &[1, 1]), 1.0);
    }

    #[test]
    fn argmax_ties_go_low() {
        let m = ndarray::array![[0.5, 0.5], [0.2, 0.8]];
        assert_eq!(argmax_rows(&m), vec![0, 1]);
    }
}
