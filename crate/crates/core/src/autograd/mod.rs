//! Define-by-run reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! return lightweight [`Var`] handles; [`Tape::backward`] walks the tape in
//! reverse and accumulates exact gradients into every recorded node.
//!
//! ```
//! use seal_core::autograd::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Matrix::from_vec(1, 2, vec![1.0, -2.0]));
//! let loss = tape.l1_norm(w);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.value(loss).get(0, 0), 3.0);
//! assert_eq!(tape.grad(w).as_slice(), &[1.0, -1.0]);
//! ```

mod matrix;

use std::sync::Arc;

use thiserror::Error;

pub use matrix::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutogradError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("index {index} out of range for {len} rows in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("backward root must be 1x1, got {0:?}")]
    NonScalarRoot((usize, usize)),
    #[error("backward already ran on this tape")]
    DoubleBackward,
}

type Result<T> = std::result::Result<T, AutogradError>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    /// Position of this value on its tape.
    pub fn tape_id(self) -> usize {
        self.0
    }
}

/// Per-row index lists in compressed form.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NeighborLists {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl NeighborLists {
    pub fn from_lists<L: AsRef<[usize]>>(lists: &[L]) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for l in lists {
            indices.extend_from_slice(l.as_ref());
            offsets.push(indices.len());
        }
        Self { offsets, indices }
    }

    /// Number of rows (lists).
    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn total_len(&self) -> usize {
        self.indices.len()
    }

    /// Concatenates lists, shifting every index of `other` by `shift`.
    pub fn append_shifted(&mut self, other: &NeighborLists, shift: usize) {
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        for l in other.iter() {
            self.indices.extend(l.iter().map(|&j| j + shift));
            self.offsets.push(self.indices.len());
        }
    }

    fn max_index(&self) -> Option<usize> {
        self.indices.iter().copied().max()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    ConcatRows(Var, Var),
    MulConst(Var, Arc<Matrix>),
    SegmentMean(Var, Arc<NeighborLists>),
    SegmentSum(Var, Arc<Vec<usize>>),
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    Sum(Var),
    Mse(Var, Arc<Matrix>),
    BceWithLogits(Var, Arc<Matrix>),
    L1(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Records operations in execution order; parents always precede children.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
    backward_done: bool,
}

fn check_same(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(AutogradError::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    /// Gradient of the backward root with respect to `v`; all zeros if no
    /// backward pass ran or `v` is not connected to the root.
    pub fn grad(&self, v: Var) -> Matrix {
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.nodes[v.0].value.shape();
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(AutogradError::ShapeMismatch {
                op: "matmul",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let out = va.matmul(vb);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        check_same("add", va, vb)?;
        let mut out = va.clone();
        out.add_assign(vb);
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a `1 x M` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(AutogradError::ShapeMismatch {
                op: "add_row",
                left: va.shape(),
                right: vr.shape(),
            });
        }
        let mut out = va.clone();
        let r = vr.as_slice();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(r) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|v| v * factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(out, Op::Relu(a))
    }

    /// Stacks the rows of `b` below the rows of `a`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(AutogradError::ShapeMismatch {
                op: "concat_rows",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let mut data = Vec::with_capacity(va.len() + vb.len());
        data.extend_from_slice(va.as_slice());
        data.extend_from_slice(vb.as_slice());
        let out = Matrix::from_vec(va.rows() + vb.rows(), va.cols(), data);
        Ok(self.push(out, Op::ConcatRows(a, b)))
    }

    /// Elementwise product with a constant (masks, dropout).
    pub fn mul_const(&mut self, a: Var, mask: Arc<Matrix>) -> Result<Var> {
        let va = self.value(a);
        check_same("mul_const", va, &mask)?;
        let data = va
            .as_slice()
            .iter()
            .zip(mask.as_slice())
            .map(|(x, m)| x * m)
            .collect();
        let out = Matrix::from_vec(va.rows(), va.cols(), data);
        Ok(self.push(out, Op::MulConst(a, mask)))
    }

    /// Row `i` of the output is the mean of the rows listed in
    /// `lists.get(i)`; an empty list yields a zero row.
    pub fn segment_mean(&mut self, values: Var, lists: Arc<NeighborLists>) -> Result<Var> {
        let v = self.value(values);
        if lists.len() != v.rows() {
            return Err(AutogradError::ShapeMismatch {
                op: "segment_mean",
                left: v.shape(),
                right: (lists.len(), v.cols()),
            });
        }
        if let Some(max) = lists.max_index() {
            if max >= v.rows() {
                return Err(AutogradError::IndexOutOfRange {
                    op: "segment_mean",
                    index: max,
                    len: v.rows(),
                });
            }
        }
        let mut out = Matrix::zeros(v.rows(), v.cols());
        for (i, list) in lists.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let inv = 1.0 / list.len() as f64;
            let o = out.row_mut(i);
            for &j in list {
                for (o, x) in o.iter_mut().zip(v.row(j)) {
                    *o += x;
                }
            }
            o.iter_mut().for_each(|x| *x *= inv);
        }
        Ok(self.push(out, Op::SegmentMean(values, lists)))
    }

    /// Sums rows into `n_segments` buckets given by `segment_of`.
    pub fn segment_sum(
        &mut self,
        values: Var,
        segment_of: Arc<Vec<usize>>,
        n_segments: usize,
    ) -> Result<Var> {
        let v = self.value(values);
        if segment_of.len() != v.rows() {
            return Err(AutogradError::ShapeMismatch {
                op: "segment_sum",
                left: v.shape(),
                right: (segment_of.len(), v.cols()),
            });
        }
        let mut out = Matrix::zeros(n_segments, v.cols());
        for (i, &s) in segment_of.iter().enumerate() {
            if s >= n_segments {
                return Err(AutogradError::IndexOutOfRange {
                    op: "segment_sum",
                    index: s,
                    len: n_segments,
                });
            }
            for (o, x) in out.row_mut(s).iter_mut().zip(v.row(i)) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::SegmentSum(values, segment_of)))
    }

    /// Row-wise layer normalization with affine `gain` and `shift` (both `1 x M`).
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let (vx, vg, vs) = (self.value(x), self.value(gain), self.value(shift));
        let m = vx.cols();
        for p in [vg, vs] {
            if p.shape() != (1, m) {
                return Err(AutogradError::ShapeMismatch {
                    op: "layer_norm",
                    left: vx.shape(),
                    right: p.shape(),
                });
            }
        }
        let mut normalized = Matrix::zeros(vx.rows(), m);
        let mut inv_std = Vec::with_capacity(vx.rows());
        let mut out = Matrix::zeros(vx.rows(), m);
        for i in 0..vx.rows() {
            let row = vx.row(i);
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            let nr = normalized.row_mut(i);
            for (n, v) in nr.iter_mut().zip(row) {
                *n = (v - mean) * is;
            }
            let or = out.row_mut(i);
            for (j, o) in or.iter_mut().enumerate() {
                *o = normalized.get(i, j) * vg.as_slice()[j] + vs.as_slice()[j];
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                shift,
                normalized,
                inv_std,
            },
        ))
    }

    /// Sum of all entries, as a `1 x 1` value.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::scalar(s), Op::Sum(a))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: Var, target: Arc<Matrix>) -> Result<Var> {
        let p = self.value(pred);
        check_same("mse", p, &target)?;
        let n = p.len().max(1) as f64;
        let s = p
            .as_slice()
            .iter()
            .zip(target.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        Ok(self.push(Matrix::scalar(s), Op::Mse(pred, target)))
    }

    /// Mean binary cross-entropy on logits, in the overflow-free form
    /// `max(z, 0) - z*y + ln(1 + exp(-|z|))`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: Arc<Matrix>) -> Result<Var> {
        let z = self.value(logits);
        check_same("bce_with_logits", z, &labels)?;
        let n = z.len().max(1) as f64;
        let s = z
            .as_slice()
            .iter()
            .zip(labels.as_slice())
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        Ok(self.push(Matrix::scalar(s), Op::BceWithLogits(logits, labels)))
    }

    pub fn l1_norm(&mut self, w: Var) -> Var {
        let s = self.value(w).abs_sum();
        self.push(Matrix::scalar(s), Op::L1(w))
    }

    /// Propagates gradients from a scalar `root` to every node on the tape.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.backward_done {
            return Err(AutogradError::DoubleBackward);
        }
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(AutogradError::NonScalarRoot(shape));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::scalar(1.0));

        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let va = &self.nodes[a.0].value;
                    let vb = &self.nodes[b.0].value;
                    let ga = g.matmul_transpose_rhs(vb);
                    let gb = va.transpose_lhs_matmul(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, x) in gr.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *row, gr);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Scale(a, f) => {
                    accumulate(&mut grads, *a, g.map(|v| v * f));
                }
                Op::Relu(a) => {
                    let va = &self.nodes[a.0].value;
                    let data = g
                        .as_slice()
                        .iter()
                        .zip(va.as_slice())
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, Matrix::from_vec(g.rows(), g.cols(), data));
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.nodes[a.0].value.rows();
                    let split = ra * g.cols();
                    let (top, bottom) = g.as_slice().split_at(split);
                    accumulate(&mut grads, *a, Matrix::from_vec(ra, g.cols(), top.to_vec()));
                    accumulate(
                        &mut grads,
                        *b,
                        Matrix::from_vec(g.rows() - ra, g.cols(), bottom.to_vec()),
                    );
                }
                Op::MulConst(a, mask) => {
                    let data = g
                        .as_slice()
                        .iter()
                        .zip(mask.as_slice())
                        .map(|(g, m)| g * m)
                        .collect();
                    accumulate(&mut grads, *a, Matrix::from_vec(g.rows(), g.cols(), data));
                }
                Op::SegmentMean(values, lists) => {
                    let mut gv = Matrix::zeros(g.rows(), g.cols());
                    for (i, list) in lists.iter().enumerate() {
                        if list.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / list.len() as f64;
                        for &j in list {
                            let gi = g.row(i);
                            for (o, x) in gv.row_mut(j).iter_mut().zip(gi) {
                                *o += x * inv;
                            }
                        }
                    }
                    accumulate(&mut grads, *values, gv);
                }
                Op::SegmentSum(values, segment_of) => {
                    let mut gv = Matrix::zeros(segment_of.len(), g.cols());
                    for (i, &s) in segment_of.iter().enumerate() {
                        gv.row_mut(i).copy_from_slice(g.row(s));
                    }
                    accumulate(&mut grads, *values, gv);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    shift,
                    normalized,
                    inv_std,
                } => {
                    let vg = &self.nodes[gain.0].value;
                    let m = g.cols();
                    let mut gx = Matrix::zeros(g.rows(), m);
                    let mut gg = Matrix::zeros(1, m);
                    let mut gs = Matrix::zeros(1, m);
                    for i in 0..g.rows() {
                        let gi = g.row(i);
                        let ni = normalized.row(i);
                        let mut dy_sum = 0.0;
                        let mut dy_n_sum = 0.0;
                        for j in 0..m {
                            gg.as_mut_slice()[j] += gi[j] * ni[j];
                            gs.as_mut_slice()[j] += gi[j];
                            let dy = gi[j] * vg.as_slice()[j];
                            dy_sum += dy;
                            dy_n_sum += dy * ni[j];
                        }
                        let scale = inv_std[i] / m as f64;
                        let out = gx.row_mut(i);
                        for j in 0..m {
                            let dy = gi[j] * vg.as_slice()[j];
                            out[j] = scale * (m as f64 * dy - dy_sum - ni[j] * dy_n_sum);
                        }
                    }
                    accumulate(&mut grads, *shift, gs);
                    accumulate(&mut grads, *gain, gg);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sum(a) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::Mse(pred, target) => {
                    let p = &self.nodes[pred.0].value;
                    let k = 2.0 * g.get(0, 0) / p.len().max(1) as f64;
                    let data = p
                        .as_slice()
                        .iter()
                        .zip(target.as_slice())
                        .map(|(a, b)| k * (a - b))
                        .collect();
                    accumulate(&mut grads, *pred, Matrix::from_vec(p.rows(), p.cols(), data));
                }
                Op::BceWithLogits(logits, labels) => {
                    let z = &self.nodes[logits.0].value;
                    let k = g.get(0, 0) / z.len().max(1) as f64;
                    let data = z
                        .as_slice()
                        .iter()
                        .zip(labels.as_slice())
                        .map(|(&z, &y)| k * (sigmoid(z) - y))
                        .collect();
                    accumulate(&mut grads, *logits, Matrix::from_vec(z.rows(), z.cols(), data));
                }
                Op::L1(w) => {
                    let gv = g.get(0, 0);
                    let gw = self.nodes[w.0].value.map(|v| {
                        if v > 0.0 {
                            gv
                        } else if v < 0.0 {
                            -gv
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *w, gw);
                }
            }
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
