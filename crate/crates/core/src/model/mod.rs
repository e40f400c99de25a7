//! The archetypal autoencoder: dual GCN encoder, archetypal decoder and the
//! sampled Skellam training loop.
//!
//! Each branch (positive view, sign-flipped negative view) runs two GCN
//! layers `relu(Â H W + b)` with `Â = D^{-1/2}(V + I)D^{-1/2}` and then an
//! MLP whose last layer emits `K + 1` numbers per node: `K` membership
//! logits and one random effect. Memberships are the temperature softmax of
//! the logits, so every row lies on the simplex.

mod io;

pub use io::{parse_model, read_model, write_model};

use crate::autodiff::{row_softmax, Tape, TapeError, Var};
use crate::graph::SignedGraph;
use crate::skellam::SkellamRates;
use crate::sparse::CsrMatrix;
use crate::spectral::NodeFeatures;
use crate::textio::FormatError;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected:?}, found {found:?}")]
    Shape {
        what: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("block size {block} outside 2..={nodes}")]
    BlockSize { block: usize, nodes: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}; parameter norms: {}", format_norms(norms))]
    NonFinite {
        epoch: usize,
        norms: Vec<(&'static str, f64)>,
    },
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn format_norms(norms: &[(&'static str, f64)]) -> String {
    norms
        .iter()
        .map(|(n, v)| format!("{n}={v:e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// How `<A z_i, A z_j>` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecoderForm {
    /// The inner product itself.
    #[default]
    Direct,
    /// `(||A(z_i + z_j)||^2 - ||A(z_i - z_j)||^2) / 4`.
    Polarization,
}

impl fmt::Display for DecoderForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderForm::Direct => "direct",
            DecoderForm::Polarization => "polarization",
        })
    }
}

impl FromStr for DecoderForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(DecoderForm::Direct),
            "polarization" => Ok(DecoderForm::Polarization),
            other => Err(format!("unknown decoder form `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// `K`.
    pub archetypes: usize,
    /// Width of the GCN layers and the MLP hidden layer.
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Nodes per sampled block; `None` means `min(N, 512)`.
    pub block: Option<usize>,
    pub t0: f64,
    pub t_min: f64,
    pub seed: u64,
    pub decoder: DecoderForm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            archetypes: 8,
            hidden: 64,
            epochs: 3000,
            lr: 0.02,
            block: None,
            t0: 1.0,
            t_min: 0.05,
            seed: 0,
            decoder: DecoderForm::Direct,
        }
    }
}

impl TrainConfig {
    pub fn block_size(&self, n: usize) -> usize {
        self.block.unwrap_or(n.min(512))
    }

    pub fn validate(&self, n: usize) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.archetypes == 0 {
            return bad("archetypes must be at least 1");
        }
        if self.hidden == 0 {
            return bad("hidden width must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.t_min > 0.0 && self.t0 >= self.t_min && self.t0.is_finite()) {
            return bad("temperatures must satisfy t0 >= t_min > 0");
        }
        let b = self.block_size(n);
        if b < 2 || b > n {
            return Err(ModelError::BlockSize { block: b, nodes: n });
        }
        Ok(())
    }
}

/// Geometric decay from `t0` at epoch 0 to `t_min` at the last epoch.
pub fn temperature_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if cfg.epochs <= 1 || epoch == 0 {
        return cfg.t0;
    }
    if epoch >= cfg.epochs - 1 {
        return cfg.t_min;
    }
    let frac = epoch as f64 / (cfg.epochs - 1) as f64;
    cfg.t0 * (cfg.t_min / cfg.t0).powf(frac)
}

/// Two GCN layers followed by the MLP head of one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchWeights {
    pub gcn_w1: Array2<f64>,
    pub gcn_b1: Array2<f64>,
    pub gcn_w2: Array2<f64>,
    pub gcn_b2: Array2<f64>,
    pub mlp_w1: Array2<f64>,
    pub mlp_b1: Array2<f64>,
    pub mlp_w2: Array2<f64>,
    pub mlp_b2: Array2<f64>,
}

impl BranchWeights {
    fn init(d: usize, h: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        BranchWeights {
            gcn_w1: glorot(d, h, 1.0, rng),
            gcn_b1: Array2::zeros((1, h)),
            gcn_w2: glorot(h, h, 1.0, rng),
            gcn_b2: Array2::zeros((1, h)),
            mlp_w1: glorot(h, h, 1.0, rng),
            mlp_b1: Array2::zeros((1, h)),
            // Small output layer: near-uniform memberships, near-zero effects.
            mlp_w2: glorot(h, k + 1, 0.1, rng),
            mlp_b2: Array2::zeros((1, k + 1)),
        }
    }

    fn tensors(&self) -> [&Array2<f64>; 8] {
        [
            &self.gcn_w1,
            &self.gcn_b1,
            &self.gcn_w2,
            &self.gcn_b2,
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            &self.mlp_b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Array2<f64>; 8] {
        [
            &mut self.gcn_w1,
            &mut self.gcn_b1,
            &mut self.gcn_w2,
            &mut self.gcn_b2,
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.mlp_w2,
            &mut self.mlp_b2,
        ]
    }
}

fn glorot(fan_in: usize, fan_out: usize, gain: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-a..a))
}

/// Names of the trainable tensors, in [`ModelParameters::tensors`] order.
pub const PARAMETER_NAMES: [&str; 17] = [
    "gcn_pos.w1",
    "gcn_pos.b1",
    "gcn_pos.w2",
    "gcn_pos.b2",
    "mlp_pos.w1",
    "mlp_pos.b1",
    "mlp_pos.w2",
    "mlp_pos.b2",
    "gcn_neg.w1",
    "gcn_neg.b1",
    "gcn_neg.w2",
    "gcn_neg.b2",
    "mlp_neg.w1",
    "mlp_neg.b1",
    "mlp_neg.w2",
    "mlp_neg.b2",
    "archetypes",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub pos: BranchWeights,
    pub neg: BranchWeights,
    /// `K x K`; column `k` is archetype `k`.
    pub archetypes: Array2<f64>,
    pub temperature: f64,
}

impl ModelParameters {
    /// Glorot-uniform weights, zero biases, `A = sqrt(K) I`.
    /// Sets the random-effect biases so that near-uniform memberships give
    /// rates equal to the positive and negative link densities of `g`.
    ///
    /// Starting near the right rate scale avoids a large first gradient that
    /// drives the hidden units of both branches inactive.
    pub fn match_link_density(&mut self, g: &SignedGraph) {
        let n = g.node_count() as f64;
        let pairs = (n * (n - 1.0) / 2.0).max(1.0);
        let k = self.archetype_count();
        let uniform = Array2::from_elem((k, 1), 1.0 / k as f64);
        let centre = self.archetypes.dot(&uniform);
        let inner = centre.iter().map(|v| v * v).sum::<f64>();
        let bias = |links: usize| 0.5 * ((links.max(1) as f64 / pairs).ln() - inner);
        self.pos.mlp_b2[[0, k]] = bias(g.positive_edge_count());
        self.neg.mlp_b2[[0, k]] = bias(g.negative_edge_count());
    }

    pub fn init(feature_dim: usize, hidden: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let pos = BranchWeights::init(feature_dim, hidden, k, rng);
        let neg = BranchWeights::init(feature_dim, hidden, k, rng);
        ModelParameters {
            pos,
            neg,
            archetypes: Array2::eye(k) * (k as f64).sqrt(),
            temperature: 1.0,
        }
    }

    pub fn archetype_count(&self) -> usize {
        self.archetypes.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.pos.gcn_w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.pos.gcn_w1.ncols()
    }

    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out: Vec<&Array2<f64>> = self.pos.tensors().into_iter().collect();
        out.extend(self.neg.tensors());
        out.push(&self.archetypes);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = self.pos.tensors_mut().into_iter().collect();
        out.extend(self.neg.tensors_mut());
        out.push(&mut self.archetypes);
        out
    }

    fn norms(&self) -> Vec<(&'static str, f64)> {
        PARAMETER_NAMES
            .iter()
            .zip(self.tensors())
            .map(|(&n, t)| (n, t.iter().map(|v| v * v).sum::<f64>().sqrt()))
            .collect()
    }

    fn check_shapes(&self, d: usize) -> Result<(), ModelError> {
        let (h, k) = (self.hidden(), self.archetype_count());
        let want = [
            (d, h),
            (1, h),
            (h, h),
            (1, h),
            (h, h),
            (1, h),
            (h, k + 1),
            (1, k + 1),
        ];
        for (i, t) in self.tensors().into_iter().enumerate() {
            let expected = if i == 16 { (k, k) } else { want[i % 8] };
            if t.dim() != expected {
                return Err(ModelError::Shape {
                    what: PARAMETER_NAMES[i].to_string(),
                    expected,
                    found: t.dim(),
                });
            }
        }
        Ok(())
    }
}

/// Per-node output of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRepresentation {
    /// `N x K`, rows on the simplex.
    pub z: Array2<f64>,
    /// `N x K`, rows on the simplex.
    pub w: Array2<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    /// `Z A^T`: row `i` is `A z_i`.
    pub z_tilde: Array2<f64>,
    pub w_tilde: Array2<f64>,
}

impl NodeRepresentation {
    pub fn node_count(&self) -> usize {
        self.z.nrows()
    }

    pub fn archetype_count(&self) -> usize {
        self.z.ncols()
    }

    /// Builds the representation from memberships, effects and `A`.
    pub fn from_parts(
        z: Array2<f64>,
        w: Array2<f64>,
        gamma: Vec<f64>,
        delta: Vec<f64>,
        archetypes: &Array2<f64>,
    ) -> Self {
        let z_tilde = z.dot(&archetypes.t());
        let w_tilde = w.dot(&archetypes.t());
        NodeRepresentation {
            z,
            w,
            gamma,
            delta,
            z_tilde,
            w_tilde,
        }
    }
}

/// `D^{-1/2} (V + I) D^{-1/2}` with `D` the row sums of `V + I`.
pub fn gcn_propagation(view: &CsrMatrix) -> CsrMatrix {
    let n = view.rows();
    let mut deg = vec![1.0; n];
    for (r, d) in deg.iter_mut().enumerate() {
        *d += view.row(r).map(|(_, v)| v).sum::<f64>();
    }
    let inv: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut triplets: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, inv[i] * inv[i])).collect();
    for r in 0..n {
        for (c, v) in view.row(r) {
            triplets.push((r, c, v * inv[r] * inv[c]));
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Graph-dependent encoder inputs, built once per graph.
pub struct EncoderInputs {
    prop_pos: Arc<CsrMatrix>,
    prop_neg: Arc<CsrMatrix>,
    /// `Â+ X` and `Â- X`; the features are constant.
    ax_pos: Array2<f64>,
    ax_neg: Array2<f64>,
}

impl EncoderInputs {
    pub fn new(g: &SignedGraph, features: &NodeFeatures) -> Result<Self, ModelError> {
        if features.node_count() != g.node_count() {
            return Err(ModelError::Shape {
                what: "features".into(),
                expected: (g.node_count(), features.dim()),
                found: features.matrix.dim(),
            });
        }
        let prop_pos = Arc::new(gcn_propagation(g.pos_view()));
        let prop_neg = Arc::new(gcn_propagation(g.neg_view()));
        // Unit eigenvectors have entries of order 1/sqrt(N); rescale the
        // columns to unit root-mean-square.
        let x = &features.matrix * (g.node_count() as f64).sqrt();
        let ax_pos = prop_pos.mul_dense(x.view());
        let ax_neg = prop_neg.mul_dense(x.view());
        Ok(EncoderInputs {
            prop_pos,
            prop_neg,
            ax_pos,
            ax_neg,
        })
    }

    pub fn node_count(&self) -> usize {
        self.ax_pos.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.ax_pos.ncols()
    }
}

/// Sampled block of node pairs with their observed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub left: Arc<[usize]>,
    pub right: Arc<[usize]>,
    pub y: Vec<i64>,
    /// `[N(N-1)/2] / [B(B-1)/2]`.
    pub scale: f64,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.left.iter().copied().zip(self.right.iter().copied()).collect()
    }

    /// Every pair of the graph, scale 1.
    pub fn full(g: &SignedGraph) -> Self {
        let nodes: Vec<usize> = (0..g.node_count()).collect();
        block_pairs(g, &nodes, 1.0)
    }
}

fn block_pairs(g: &SignedGraph, nodes: &[usize], scale: f64) -> PairBatch {
    let b = nodes.len();
    let count = b * b.saturating_sub(1) / 2;
    let mut left = Vec::with_capacity(count);
    let mut right = Vec::with_capacity(count);
    for a in 0..b {
        for c in a + 1..b {
            left.push(nodes[a]);
            right.push(nodes[c]);
        }
    }
    // Fill weights from adjacency rows instead of a lookup per pair.
    let mut slot = vec![usize::MAX; g.node_count()];
    for (a, &v) in nodes.iter().enumerate() {
        slot[v] = a;
    }
    let mut y = vec![0i64; count];
    let offset = |a: usize| a * b - a * (a + 1) / 2;
    for (a, &v) in nodes.iter().enumerate() {
        for (view, sign) in [(g.pos_view(), 1.0), (g.neg_view(), -1.0)] {
            for (u, weight) in view.row(v) {
                let c = slot[u];
                if c != usize::MAX && c > a {
                    y[offset(a) + c - a - 1] = (sign * weight) as i64;
                }
            }
        }
    }
    PairBatch {
        left: left.into(),
        right: right.into(),
        y,
        scale,
    }
}

/// Draws `block` nodes uniformly without replacement and returns every pair
/// among them (sorted node order), non-edges included.
pub fn sample_training_pairs<R: Rng + ?Sized>(g: &SignedGraph, block: usize, rng: &mut R) -> Result<PairBatch, ModelError> {
    let n = g.node_count();
    if block < 2 || block > n {
        return Err(ModelError::BlockSize { block, nodes: n });
    }
    let mut nodes = rand::seq::index::sample(rng, n, block).into_vec();
    nodes.sort_unstable();
    let total = (n * (n - 1) / 2) as f64;
    let sampled = (block * (block - 1) / 2) as f64;
    Ok(block_pairs(g, &nodes, total / sampled))
}

struct BranchVars([Var; 8]);

struct ForwardPass {
    params: Vec<Var>,
    z: Var,
    w: Var,
    gamma: Var,
    delta: Var,
    archetypes: Var,
}

/// Negative slope of the hidden activations. Units stay trainable after a
/// bad step pushes them below zero for every node.
const LEAK: f64 = 0.01;

fn branch_forward(tape: &mut Tape, prop: &Arc<CsrMatrix>, ax: Var, v: &BranchVars, k: usize) -> Result<(Var, Var), TapeError> {
    let [gw1, gb1, gw2, gb2, mw1, mb1, mw2, mb2] = v.0;
    let h = tape.matmul(ax, gw1)?;
    let h = tape.add_bias(h, gb1)?;
    let h = tape.leaky_relu(h, LEAK);
    let h = tape.matmul(h, gw2)?;
    let h = tape.sparse_matmul(prop, h)?;
    let h = tape.add_bias(h, gb2)?;
    let m = tape.matmul(h, mw1)?;
    let m = tape.add_bias(m, mb1)?;
    let m = tape.leaky_relu(m, LEAK);
    let o = tape.matmul(m, mw2)?;
    let o = tape.add_bias(o, mb2)?;
    let logits = tape.slice_cols(o, 0, k)?;
    let effect = tape.slice_cols(o, k, k + 1)?;
    Ok((logits, effect))
}

fn encode_on_tape(
    tape: &mut Tape,
    inputs: &EncoderInputs,
    params: &ModelParameters,
    temperature: f64,
) -> Result<ForwardPass, ModelError> {
    params.check_shapes(inputs.feature_dim())?;
    let k = params.archetype_count();
    let vars: Vec<Var> = params.tensors().into_iter().map(|t| tape.param(t.clone())).collect();
    let pos = BranchVars(vars[0..8].try_into().expect("eight tensors"));
    let neg = BranchVars(vars[8..16].try_into().expect("eight tensors"));
    let archetypes = vars[16];
    let ax_pos = tape.constant(inputs.ax_pos.clone());
    let ax_neg = tape.constant(inputs.ax_neg.clone());
    let (lz, gamma) = branch_forward(tape, &inputs.prop_pos, ax_pos, &pos, k)?;
    let (lw, delta) = branch_forward(tape, &inputs.prop_neg, ax_neg, &neg, k)?;
    let z = tape.row_softmax(lz, temperature)?;
    let w = tape.row_softmax(lw, temperature)?;
    Ok(ForwardPass {
        params: vars,
        z,
        w,
        gamma,
        delta,
        archetypes,
    })
}

/// `log lambda` for the batch pairs of one space, on the tape.
fn log_rate_on_tape(
    tape: &mut Tape,
    memberships: Var,
    effect: Var,
    archetypes: Var,
    batch: &PairBatch,
    form: DecoderForm,
) -> Result<Var, TapeError> {
    let at = tape.transpose(archetypes);
    let tilde = tape.matmul(memberships, at)?;
    tape.pair_log_rates(tilde, effect, &batch.left, &batch.right, form == DecoderForm::Polarization)
}

/// Scaled batch negative log-likelihood and its gradient for every tensor
/// of [`ModelParameters::tensors`], in order.
pub fn loss_and_gradients(
    inputs: &EncoderInputs,
    params: &ModelParameters,
    temperature: f64,
    batch: &PairBatch,
    form: DecoderForm,
) -> Result<(f64, Vec<Array2<f64>>), ModelError> {
    let mut tape = Tape::new();
    let fwd = encode_on_tape(&mut tape, inputs, params, temperature)?;
    let log_pos = log_rate_on_tape(&mut tape, fwd.z, fwd.gamma, fwd.archetypes, batch, form)?;
    let log_neg = log_rate_on_tape(&mut tape, fwd.w, fwd.delta, fwd.archetypes, batch, form)?;
    let lp = tape.exp(log_pos);
    let ln = tape.exp(log_neg);
    let loss = tape.skellam_nll(lp, ln, &batch.y, batch.scale)?;
    tape.backward(loss)?;
    let grads = fwd
        .params
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| tape.grad(v).cloned().unwrap_or_else(|| Array2::zeros(t.dim())))
        .collect();
    Ok((tape.value(loss)[[0, 0]], grads))
}

/// Runs both encoder branches at `params.temperature`.
pub fn encode(g: &SignedGraph, features: &NodeFeatures, params: &ModelParameters) -> Result<NodeRepresentation, ModelError> {
    let inputs = EncoderInputs::new(g, features)?;
    encode_inputs(&inputs, params, params.temperature)
}

fn encode_inputs(inputs: &EncoderInputs, params: &ModelParameters, temperature: f64) -> Result<NodeRepresentation, ModelError> {
    let mut tape = Tape::new();
    let fwd = encode_on_tape(&mut tape, inputs, params, temperature)?;
    Ok(NodeRepresentation::from_parts(
        tape.value(fwd.z).clone(),
        tape.value(fwd.w).clone(),
        tape.value(fwd.gamma).column(0).to_vec(),
        tape.value(fwd.delta).column(0).to_vec(),
        &params.archetypes,
    ))
}

/// Row-wise temperature softmax of membership logits.
pub fn memberships(logits: &Array2<f64>, temperature: f64) -> Array2<f64> {
    row_softmax(logits, temperature)
}

/// `(log lambda_pos, log lambda_neg)` for each pair.
pub fn log_rates(rep: &NodeRepresentation, pairs: &[(usize, usize)], form: DecoderForm) -> (Vec<f64>, Vec<f64>) {
    let one = |tilde: &Array2<f64>, effect: &[f64], i: usize, j: usize| {
        let (a, b) = (tilde.row(i), tilde.row(j));
        let inner = match form {
            DecoderForm::Direct => a.dot(&b),
            DecoderForm::Polarization => {
                let s = &a + &b;
                let d = &a - &b;
                0.25 * (s.dot(&s) - d.dot(&d))
            }
        };
        effect[i] + effect[j] + inner
    };
    pairs
        .iter()
        .map(|&(i, j)| (one(&rep.z_tilde, &rep.gamma, i, j), one(&rep.w_tilde, &rep.delta, i, j)))
        .unzip()
}

/// `lambda_pos = exp(gamma_i + gamma_j + <A z_i, A z_j>)` and likewise for
/// the negative space.
pub fn decode_rates(rep: &NodeRepresentation, pairs: &[(usize, usize)], form: DecoderForm) -> SkellamRates {
    let (lp, ln) = log_rates(rep, pairs, form);
    SkellamRates {
        pairs: pairs.to_vec(),
        lambda_pos: lp.into_iter().map(f64::exp).collect(),
        lambda_neg: ln.into_iter().map(f64::exp).collect(),
    }
}

/// Global gradient-norm clipping against a running average of recent norms.
///
/// A single batch can produce a gradient hundreds of times larger than usual
/// (a pair whose rate is far off). Adam would turn that into a step of
/// several learning rates in every coordinate, which pushes the ReLU units
/// of a branch into a dead state it never leaves.
#[derive(Default)]
struct NormClip {
    average: Option<f64>,
}

impl NormClip {
    const FACTOR: f64 = 4.0;
    const DECAY: f64 = 0.9;

    fn apply(&mut self, grads: &mut [Array2<f64>]) {
        let norm = grads.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
        let average = *self.average.get_or_insert(norm);
        let limit = Self::FACTOR * average;
        let kept = if norm > limit && norm > 0.0 {
            let shrink = limit / norm;
            grads.iter_mut().for_each(|g| *g *= shrink);
            limit
        } else {
            norm
        };
        self.average = Some(Self::DECAY * average + (1.0 - Self::DECAY) * kept);
    }
}

struct Adam {
    lr: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    const BETA1: f64 = 0.9;
    // A short second-moment memory. With 0.999 a burst of large gradients
    // late in annealing outruns the denominator and wipes out the memberships.
    const BETA2: f64 = 0.99;
    const EPS: f64 = 1e-8;

    fn new(params: &ModelParameters, lr: f64) -> Self {
        let zeros: Vec<Array2<f64>> = params.tensors().iter().map(|t| Array2::zeros(t.dim())).collect();
        Adam {
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn update(&mut self, params: &mut ModelParameters, grads: &[Array2<f64>]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            });
        }
    }
}

/// A fitted model with the settings and data fingerprint it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParameters,
    pub representation: NodeRepresentation,
    pub config: TrainConfig,
    /// Digest of the graph the model was fitted to.
    pub graph_digest: String,
    /// Scaled batch loss at each epoch, before that epoch's update.
    pub loss_trace: Vec<f64>,
}

impl TrainedModel {
    pub fn rates(&self, pairs: &[(usize, usize)]) -> SkellamRates {
        decode_rates(&self.representation, pairs, self.config.decoder)
    }

    pub fn log_rates(&self, pairs: &[(usize, usize)]) -> (Vec<f64>, Vec<f64>) {
        log_rates(&self.representation, pairs, self.config.decoder)
    }
}

/// Fits all parameters with Adam, one sampled block per epoch.
pub fn train(g: &SignedGraph, features: &NodeFeatures, cfg: &TrainConfig) -> Result<TrainedModel, ModelError> {
    train_with(g, features, cfg, |_, _, _| {})
}

/// [`train`] with a callback after every epoch, given the epoch, the
/// parameters after the update and the loss before it.
pub fn train_with(
    g: &SignedGraph,
    features: &NodeFeatures,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &ModelParameters, f64),
) -> Result<TrainedModel, ModelError> {
    let n = g.node_count();
    cfg.validate(n)?;
    let inputs = EncoderInputs::new(g, features)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParameters::init(inputs.feature_dim(), cfg.hidden, cfg.archetypes, &mut rng);
    params.match_link_density(g);
    let mut adam = Adam::new(&params, cfg.lr);
    let mut clip = NormClip::default();
    let block = cfg.block_size(n);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let t = temperature_schedule(epoch, cfg);
        params.temperature = t;
        let batch = sample_training_pairs(g, block, &mut rng)?;
        let (loss, grads) = loss_and_gradients(&inputs, &params, t, &batch, cfg.decoder)?;
        if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(ModelError::NonFinite {
                epoch,
                norms: params.norms(),
            });
        }
        let mut grads = grads;
        clip.apply(&mut grads);
        // Softmax sensitivity grows as 1/T. Full 1/T damping freezes the
        // memberships soft, none lets late epochs blow up; sqrt sits between.
        adam.lr = cfg.lr * (t / cfg.t0).sqrt();
        adam.update(&mut params, &grads);
        loss_trace.push(loss);
        on_epoch(epoch, &params, loss);
    }
    params.temperature = cfg.t_min.min(temperature_schedule(cfg.epochs - 1, cfg));
    let representation = encode_inputs(&inputs, &params, params.temperature)?;
    Ok(TrainedModel {
        params,
        representation,
        config: cfg.clone(),
        graph_digest: g.digest(),
        loss_trace,
    })
}
