//! A minimal reverse-mode differentiation tape over dense matrices.
//!
//! Every forward op appends a node holding its value; [`Tape::backward`]
//! walks the nodes in exact reverse order and accumulates gradients into the
//! leaves created with [`Tape::param`]. Sparse operands (graph propagation
//! matrices) are constants: no gradient flows into them.
//!
//! ```
//! use ndarray::array;
//! use sgaae::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(array![[0.0, 1.0], [2.0, -1.0]]);
//! let e = tape.exp(x);
//! let loss = tape.sum(e);
//! tape.backward(loss).unwrap();
//! let g = tape.grad(x).unwrap();
//! assert_eq!(g[[1, 0]], 2f64.exp());
//! ```

use crate::skellam;
use crate::sparse::CsrMatrix;
use ndarray::{Array2, Axis, Zip};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("softmax temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("{op}: index {index} out of range for {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("backward seed must be a 1x1 node, got {0:?}")]
    SeedNotScalar((usize, usize)),
    #[error("backward called on an empty tape")]
    EmptyTape,
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(Arc<CsrMatrix>, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    /// Negative-side slope.
    Relu(Var, f64),
    Exp(Var),
    RowSoftmax(Var, f64),
    GatherRows(Var, Arc<[usize]>),
    RowDot(Var, Var),
    PairLogRate {
        tilde: Var,
        effect: Var,
        left: Arc<[usize]>,
        right: Arc<[usize]>,
    },
    SliceCols(Var, usize),
    Transpose(Var),
    Sum(Var),
    SkellamNll {
        pos: Var,
        neg: Var,
        scale: f64,
        d_pos: Vec<f64>,
        d_neg: Vec<f64>,
    },
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation; confined to one thread.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Array2<f64>>>,
}

fn shape(a: &Array2<f64>) -> (usize, usize) {
    a.dim()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable leaf; its gradient accumulates across `backward` calls.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Accumulated gradient of a parameter leaf, `None` before any backward.
    pub fn grad(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Resets every accumulated gradient to exact zero.
    pub fn zero_grad(&mut self) {
        for g in self.grads.iter_mut().flatten() {
            g.fill(0.0);
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ncols() != bv.nrows() {
            return Err(TapeError::ShapeMismatch {
                op: "matmul",
                left: shape(av),
                right: shape(bv),
            });
        }
        let out = av.dot(bv);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `s * x` with a constant sparse `s`.
    pub fn sparse_matmul(&mut self, s: &Arc<CsrMatrix>, x: Var) -> Result<Var, TapeError> {
        let xv = self.value(x);
        if s.cols() != xv.nrows() {
            return Err(TapeError::ShapeMismatch {
                op: "sparse_matmul",
                left: (s.rows(), s.cols()),
                right: shape(xv),
            });
        }
        let out = s.mul_dense(xv.view());
        let rg = self.needs(x);
        Ok(self.push(out, Op::SparseMatMul(Arc::clone(s), x), rg))
    }

    /// Adds the `1 x m` row `bias` to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TapeError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.nrows() != 1 || bv.ncols() != xv.ncols() {
            return Err(TapeError::ShapeMismatch {
                op: "add_bias",
                left: shape(xv),
                right: shape(bv),
            });
        }
        let out = xv + bv;
        let rg = self.needs(x) || self.needs(bias);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TapeError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TapeError::ShapeMismatch {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x) * factor;
        let rg = self.needs(x);
        self.push(out, Op::Scale(x, factor), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    /// `max(x, 0) + slope * min(x, 0)`.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).mapv(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.needs(x);
        self.push(out, Op::Relu(x, slope), rg)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(f64::exp);
        let rg = self.needs(x);
        self.push(out, Op::Exp(x), rg)
    }

    /// Row-wise `softmax(logits / temperature)`.
    pub fn row_softmax(&mut self, logits: Var, temperature: f64) -> Result<Var, TapeError> {
        if !(temperature > 0.0) {
            return Err(TapeError::NonPositiveTemperature(temperature));
        }
        let out = row_softmax(self.value(logits), temperature);
        let rg = self.needs(logits);
        Ok(self.push(out, Op::RowSoftmax(logits, temperature), rg))
    }

    /// `out[k] = x[indices[k]]`.
    pub fn gather_rows(&mut self, x: Var, indices: &Arc<[usize]>) -> Result<Var, TapeError> {
        let xv = self.value(x);
        let (rows, cols) = xv.dim();
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(TapeError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                len: rows,
            });
        }
        let src = xv.as_standard_layout();
        let src = src.as_slice().expect("standard layout");
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices.iter() {
            data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let out = Array2::from_shape_vec((indices.len(), cols), data).expect("gathered shape");
        let rg = self.needs(x);
        Ok(self.push(out, Op::GatherRows(x, Arc::clone(indices)), rg))
    }

    /// `effect_i + effect_j + <tilde_i, tilde_j>` for every pair `(left[k], right[k])`.
    ///
    /// Same value as gathering both sides and taking row inner products, without
    /// materializing the gathered rows. With `polarization` the inner product
    /// is evaluated as `(|t_i + t_j|^2 - |t_i - t_j|^2) / 4`.
    pub fn pair_log_rates(
        &mut self,
        tilde: Var,
        effect: Var,
        left: &Arc<[usize]>,
        right: &Arc<[usize]>,
        polarization: bool,
    ) -> Result<Var, TapeError> {
        let (tv, ev) = (self.value(tilde), self.value(effect));
        if ev.dim() != (tv.nrows(), 1) {
            return Err(TapeError::ShapeMismatch {
                op: "pair_log_rates",
                left: shape(tv),
                right: shape(ev),
            });
        }
        if left.len() != right.len() {
            return Err(TapeError::ShapeMismatch {
                op: "pair_log_rates",
                left: (left.len(), 1),
                right: (right.len(), 1),
            });
        }
        let (rows, cols) = tv.dim();
        if let Some(&bad) = left.iter().chain(right.iter()).find(|&&i| i >= rows) {
            return Err(TapeError::IndexOutOfRange {
                op: "pair_log_rates",
                index: bad,
                len: rows,
            });
        }
        let ts = tv.as_standard_layout();
        let t = ts.as_slice().expect("standard layout");
        let e: Vec<f64> = ev.column(0).to_vec();
        let out: Vec<f64> = left
            .iter()
            .zip(right.iter())
            .map(|(&i, &j)| {
                let (a, b) = (&t[i * cols..(i + 1) * cols], &t[j * cols..(j + 1) * cols]);
                let inner: f64 = if polarization {
                    let (mut ss, mut dd) = (0.0, 0.0);
                    for (x, y) in a.iter().zip(b) {
                        ss += (x + y) * (x + y);
                        dd += (x - y) * (x - y);
                    }
                    0.25 * (ss - dd)
                } else {
                    a.iter().zip(b).map(|(x, y)| x * y).sum()
                };
                e[i] + e[j] + inner
            })
            .collect();
        let out = Array2::from_shape_vec((left.len(), 1), out).expect("column shape");
        let rg = self.needs(tilde) || self.needs(effect);
        Ok(self.push(
            out,
            Op::PairLogRate {
                tilde,
                effect,
                left: Arc::clone(left),
                right: Arc::clone(right),
            },
            rg,
        ))
    }

    /// Row-wise inner products of two equally shaped matrices, as a column.
    pub fn pairwise_inner_products(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.same_shape("pairwise_inner_products", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let cols = av.ncols().max(1);
        let (sa, sb) = (av.as_standard_layout(), bv.as_standard_layout());
        let dots: Vec<f64> = sa
            .as_slice()
            .expect("standard layout")
            .chunks(cols)
            .zip(sb.as_slice().expect("standard layout").chunks(cols))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
            .collect();
        let out = Array2::from_shape_vec((av.nrows(), 1), dots).expect("column shape");
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::RowDot(a, b), rg))
    }

    /// Columns `start..end` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TapeError> {
        let xv = self.value(x);
        if start > end || end > xv.ncols() {
            return Err(TapeError::IndexOutOfRange {
                op: "slice_cols",
                index: end,
                len: xv.ncols(),
            });
        }
        let out = xv.slice(ndarray::s![.., start..end]).to_owned();
        let rg = self.needs(x);
        Ok(self.push(out, Op::SliceCols(x, start), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).t().as_standard_layout().into_owned();
        let rg = self.needs(x);
        self.push(out, Op::Transpose(x), rg)
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().fold(0.0, |acc, &v| acc + v);
        let rg = self.needs(x);
        self.push(Array2::from_elem((1, 1), total), Op::Sum(x), rg)
    }

    /// `scale * sum_k NLL(y_k | pos_k, neg_k)` as a terminal `1 x 1` node.
    ///
    /// `pos` and `neg` are `n x 1` rate columns. The backward rule uses the
    /// analytic rate derivatives from [`skellam::pair_nll`].
    pub fn skellam_nll(&mut self, pos: Var, neg: Var, y: &[i64], scale: f64) -> Result<Var, TapeError> {
        self.same_shape("skellam_nll", pos, neg)?;
        let (pv, nv) = (self.value(pos), self.value(neg));
        if pv.ncols() != 1 || pv.nrows() != y.len() {
            return Err(TapeError::ShapeMismatch {
                op: "skellam_nll",
                left: shape(pv),
                right: (y.len(), 1),
            });
        }
        let lp: Vec<f64> = pv.column(0).to_vec();
        let ln: Vec<f64> = nv.column(0).to_vec();
        let batch = skellam::batch_nll_slices(y, &lp, &ln).expect("lengths checked");
        let rg = self.needs(pos) || self.needs(neg);
        Ok(self.push(
            Array2::from_elem((1, 1), scale * batch.total),
            Op::SkellamNll {
                pos,
                neg,
                scale,
                d_pos: batch.d_pos,
                d_neg: batch.d_neg,
            },
            rg,
        ))
    }

    /// Propagates `d seed / d node` back to every parameter leaf and adds it
    /// to the leaf's accumulated gradient.
    pub fn backward(&mut self, seed: Var) -> Result<(), TapeError> {
        if self.nodes.is_empty() {
            return Err(TapeError::EmptyTape);
        }
        let seed_shape = self.shape(seed);
        if seed_shape != (1, 1) {
            return Err(TapeError::SeedNotScalar(seed_shape));
        }
        let mut adj: Vec<Option<Array2<f64>>> = (0..=seed.0).map(|_| None).collect();
        adj[seed.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=seed.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let mut send = |v: Var, contrib: Array2<f64>| {
                if self.nodes[v.0].requires_grad {
                    match &mut adj[v.0] {
                        Some(acc) => *acc += &contrib,
                        slot @ None => *slot = Some(contrib),
                    }
                }
            };
            match &node.op {
                Op::Leaf => {
                    match &mut self.grads[idx] {
                        Some(acc) => *acc += &g,
                        slot @ None => *slot = Some(g),
                    }
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    if self.nodes[a.0].requires_grad {
                        send(*a, g.dot(&bv.t()));
                    }
                    if self.nodes[b.0].requires_grad {
                        send(*b, av.t().dot(&g));
                    }
                }
                Op::SparseMatMul(s, x) => send(*x, s.transpose_mul_dense(g.view())),
                Op::AddBias(x, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    send(*b, gb);
                    send(*x, g);
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Sub(a, b) => {
                    send(*a, g.clone());
                    send(*b, -g);
                }
                Op::Scale(x, c) => send(*x, g * *c),
                Op::Relu(x, slope) => {
                    let xv = &self.nodes[x.0].value;
                    let mut gx = g;
                    Zip::from(&mut gx).and(xv).for_each(|gi, &xi| {
                        if xi <= 0.0 {
                            *gi *= *slope;
                        }
                    });
                    send(*x, gx);
                }
                Op::Exp(x) => send(*x, g * &node.value),
                Op::RowSoftmax(x, t) => {
                    // dL/dlogits = p * (g - <g, p>_row) / T
                    let p = &node.value;
                    let mut gx = g;
                    for (mut grow, prow) in gx.rows_mut().into_iter().zip(p.rows()) {
                        let inner = grow.dot(&prow);
                        Zip::from(&mut grow).and(&prow).for_each(|gi, &pi| {
                            *gi = pi * (*gi - inner) / t;
                        });
                    }
                    send(*x, gx);
                }
                Op::GatherRows(x, indices) => {
                    let (rows, cols) = self.nodes[x.0].value.dim();
                    let mut acc = vec![0.0; rows * cols];
                    let gs = g.as_standard_layout();
                    for (&i, src) in indices.iter().zip(gs.as_slice().expect("standard layout").chunks(cols.max(1))) {
                        for (d, s) in acc[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    send(*x, Array2::from_shape_vec((rows, cols), acc).expect("scatter shape"));
                }
                Op::RowDot(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let cols = av.ncols().max(1);
                    let gcol: Vec<f64> = g.column(0).to_vec();
                    let scaled = |m: &Array2<f64>| {
                        let mut out = m.as_standard_layout().into_owned();
                        for (row, &gk) in out.as_slice_mut().expect("standard layout").chunks_mut(cols).zip(&gcol) {
                            row.iter_mut().for_each(|v| *v *= gk);
                        }
                        out
                    };
                    if self.nodes[a.0].requires_grad {
                        send(*a, scaled(bv));
                    }
                    if self.nodes[b.0].requires_grad {
                        send(*b, scaled(av));
                    }
                }
                Op::SliceCols(x, start) => {
                    let xv = &self.nodes[x.0].value;
                    let mut gx = Array2::zeros(xv.dim());
                    gx.slice_mut(ndarray::s![.., *start..*start + g.ncols()]).assign(&g);
                    send(*x, gx);
                }
                Op::Transpose(x) => send(*x, g.t().as_standard_layout().into_owned()),
                Op::Sum(x) => {
                    let dim = self.nodes[x.0].value.dim();
                    send(*x, Array2::from_elem(dim, g[[0, 0]]));
                }
                Op::PairLogRate { tilde, effect, left, right } => {
                    let tv = &self.nodes[tilde.0].value;
                    let (rows, cols) = tv.dim();
                    let ts = tv.as_standard_layout();
                    let t = ts.as_slice().expect("standard layout");
                    let mut gt = vec![0.0; rows * cols];
                    let mut ge = vec![0.0; rows];
                    for ((&i, &j), &gk) in left.iter().zip(right.iter()).zip(g.column(0)) {
                        ge[i] += gk;
                        ge[j] += gk;
                        for c in 0..cols {
                            gt[i * cols + c] += gk * t[j * cols + c];
                            gt[j * cols + c] += gk * t[i * cols + c];
                        }
                    }
                    let (tilde, effect) = (*tilde, *effect);
                    send(tilde, Array2::from_shape_vec((rows, cols), gt).expect("scatter shape"));
                    send(effect, Array2::from_shape_vec((rows, 1), ge).expect("scatter shape"));
                }
                Op::SkellamNll {
                    pos,
                    neg,
                    scale,
                    d_pos,
                    d_neg,
                } => {
                    let up = g[[0, 0]] * scale;
                    let gp = Array2::from_shape_fn((d_pos.len(), 1), |(k, _)| up * d_pos[k]);
                    let gn = Array2::from_shape_fn((d_neg.len(), 1), |(k, _)| up * d_neg[k]);
                    send(*pos, gp);
                    send(*neg, gn);
                }
            }
        }
        Ok(())
    }
}

/// Row-wise `softmax(logits / temperature)` with the row maximum subtracted.
pub fn row_softmax(logits: &Array2<f64>, temperature: f64) -> Array2<f64> {
    let mut out = logits / temperature;
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total: f64 = row.sum();
        row /= total;
    }
    out
}
