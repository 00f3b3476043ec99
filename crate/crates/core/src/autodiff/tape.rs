//! Operation recording and the backward pass.

use std::collections::BTreeMap;

use super::optim::{ParamId, ParamSet};
use super::tensor::Tensor;
use super::{AutodiffError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ValueId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// Parameter mirror; the id association lives in `Tape::param_nodes`.
    Param,
    MatMul {
        a: ValueId,
        b: ValueId,
    },
    Add {
        a: ValueId,
        b: ValueId,
    },
    /// Row-broadcast bias addition: x is [r x c], bias is [c].
    AddBias {
        x: ValueId,
        bias: ValueId,
    },
    Mul {
        a: ValueId,
        b: ValueId,
    },
    Scale {
        x: ValueId,
        factor: f64,
    },
    AddN {
        xs: Vec<ValueId>,
    },
    Tanh {
        x: ValueId,
    },
    Softmax {
        x: ValueId,
    },
    CrossEntropy {
        logits: ValueId,
        targets: Vec<usize>,
        /// Softmax of the logits, saved at forward time for the backward rule.
        probs: Vec<f64>,
    },
    GradReverse {
        x: ValueId,
        lambda: f64,
    },
    Embedding {
        table: ValueId,
        indices: Vec<usize>,
    },
    /// Mean over rows within each segment; one output row per segment.
    MeanPoolSegments {
        x: ValueId,
        lens: Vec<usize>,
    },
    /// Rows shifted by `offset` within each segment, zero-filled at edges.
    ShiftRowsSegments {
        x: ValueId,
        offset: i64,
        lens: Vec<usize>,
    },
    Concat {
        xs: Vec<ValueId>,
        axis: usize,
    },
    Sum {
        x: ValueId,
    },
    /// x scaled by the (row, col) entry of a matrix node.
    ScaleByEntry {
        matrix: ValueId,
        row: usize,
        col: usize,
        x: ValueId,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients keyed by [`ValueId`], produced by [`Tape::backward`].
#[derive(Debug)]
pub struct GradientMap {
    grads: Vec<Option<Tensor>>,
}

impl GradientMap {
    /// Gradient with respect to a recorded value, if any reached it.
    pub fn wrt(&self, id: ValueId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// Records one training step's forward operations for reverse replay.
///
/// Values are immutable once recorded; the tape is dropped after backward.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: BTreeMap<ParamId, ValueId>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> ValueId {
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node { op, value });
        id
    }

    /// Record a constant or input tensor.
    pub fn leaf(&mut self, value: Tensor) -> ValueId {
        self.push(Op::Leaf, value)
    }

    /// Record a parameter, snapshotting its current value. Registering the
    /// same parameter twice on one tape returns the same node.
    pub fn param(&mut self, id: ParamId, params: &ParamSet) -> ValueId {
        if let Some(&vid) = self.param_nodes.get(&id) {
            return vid;
        }
        let vid = self.push(Op::Param, params.value(id).clone());
        self.param_nodes.insert(id, vid);
        vid
    }

    // ── Operations ──────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        matmul_into(ta.values(), tb.values(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(Op::MatMul { a, b }, value))
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "add",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let values = ta
            .values()
            .iter()
            .zip(tb.values())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), values)?;
        Ok(self.push(Op::Add { a, b }, value))
    }

    pub fn add_bias(&mut self, x: ValueId, bias: ValueId) -> Result<ValueId> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tx.shape().len() != 2 || tb.shape().len() != 1 || tx.cols() != tb.shape()[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "add_bias",
                left: tx.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let c = tx.cols();
        let values = tx
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v + tb.values()[i % c])
            .collect();
        let value = Tensor::new(tx.shape().to_vec(), values)?;
        Ok(self.push(Op::AddBias { x, bias }, value))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "mul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let values = ta
            .values()
            .iter()
            .zip(tb.values())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), values)?;
        Ok(self.push(Op::Mul { a, b }, value))
    }

    pub fn scale(&mut self, x: ValueId, factor: f64) -> ValueId {
        let tx = self.value(x);
        let values = tx.values().iter().map(|v| v * factor).collect();
        let value = Tensor::new(tx.shape().to_vec(), values).expect("shape preserved");
        self.push(Op::Scale { x, factor }, value)
    }

    pub fn add_n(&mut self, xs: &[ValueId]) -> Result<ValueId> {
        let first = *xs.first().ok_or(AutodiffError::EmptyInput { op: "add_n" })?;
        let shape = self.value(first).shape().to_vec();
        let mut values = self.value(first).values().to_vec();
        for &x in &xs[1..] {
            let tx = self.value(x);
            if tx.shape() != shape.as_slice() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "add_n",
                    left: shape,
                    right: tx.shape().to_vec(),
                });
            }
            for (acc, v) in values.iter_mut().zip(tx.values()) {
                *acc += v;
            }
        }
        let value = Tensor::new(shape, values)?;
        Ok(self.push(Op::AddN { xs: xs.to_vec() }, value))
    }

    pub fn tanh(&mut self, x: ValueId) -> ValueId {
        let tx = self.value(x);
        let values = tx.values().iter().map(|v| v.tanh()).collect();
        let value = Tensor::new(tx.shape().to_vec(), values).expect("shape preserved");
        self.push(Op::Tanh { x }, value)
    }

    /// Softmax over the last axis, computed with max-subtraction.
    pub fn softmax(&mut self, x: ValueId) -> Result<ValueId> {
        let tx = self.value(x);
        if tx.shape().is_empty() {
            return Err(AutodiffError::BadRank {
                op: "softmax",
                expected: 1,
                got: tx.shape().to_vec(),
            });
        }
        let width = *tx.shape().last().expect("non-empty shape");
        let mut values = tx.values().to_vec();
        softmax_rows(&mut values, width);
        let value = Tensor::new(tx.shape().to_vec(), values)?;
        Ok(self.push(Op::Softmax { x }, value))
    }

    /// Mean over the batch of `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: ValueId, targets: &[usize]) -> Result<ValueId> {
        let tl = self.value(logits);
        if tl.shape().len() != 2 || tl.rows() != targets.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "cross_entropy",
                left: tl.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        let (b, k) = (tl.rows(), tl.cols());
        for &t in targets {
            if t >= k {
                return Err(AutodiffError::TargetOutOfRange { index: t, classes: k });
            }
        }
        let mut probs = tl.values().to_vec();
        softmax_rows(&mut probs, k);
        let mut loss = 0.0;
        for (row, &t) in targets.iter().enumerate() {
            let lv = tl.values()[row * k..(row + 1) * k].to_vec();
            let max = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + lv.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - lv[t];
        }
        loss /= b as f64;
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            probs,
        };
        Ok(self.push(op, Tensor::scalar(loss)))
    }

    /// Identity forward; backward multiplies the upstream gradient by
    /// `-lambda`. The sign flip is internal, so callers supply a magnitude.
    pub fn grad_reverse(&mut self, x: ValueId, lambda: f64) -> Result<ValueId> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(AutodiffError::NegativeLambda(lambda));
        }
        let value = self.value(x).clone();
        Ok(self.push(Op::GradReverse { x, lambda }, value))
    }

    /// Gather rows of `table` at `indices`.
    pub fn embedding(&mut self, table: ValueId, indices: &[usize]) -> Result<ValueId> {
        let tt = self.value(table);
        if tt.shape().len() != 2 {
            return Err(AutodiffError::BadRank {
                op: "embedding",
                expected: 2,
                got: tt.shape().to_vec(),
            });
        }
        let (rows, width) = (tt.rows(), tt.cols());
        let mut values = Vec::with_capacity(indices.len() * width);
        for &ix in indices {
            if ix >= rows {
                return Err(AutodiffError::EmbeddingIndexOutOfRange { index: ix, rows });
            }
            values.extend_from_slice(&tt.values()[ix * width..(ix + 1) * width]);
        }
        let value = Tensor::new(vec![indices.len(), width], values)?;
        Ok(self.push(
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
            value,
        ))
    }

    /// Mean over the sequence axis (all rows), yielding one row.
    pub fn mean_pool(&mut self, x: ValueId) -> Result<ValueId> {
        let rows = self.require_matrix(x, "mean_pool")?.rows();
        self.mean_pool_segments(x, &[rows])
    }

    /// Mean over each segment of rows; output has one row per segment.
    pub fn mean_pool_segments(&mut self, x: ValueId, lens: &[usize]) -> Result<ValueId> {
        let tx = self.require_matrix(x, "mean_pool")?;
        let (rows, cols) = (tx.rows(), tx.cols());
        check_segments(lens, rows)?;
        let mut values = vec![0.0; lens.len() * cols];
        let mut start = 0;
        for (seg, &len) in lens.iter().enumerate() {
            for r in start..start + len {
                for c in 0..cols {
                    values[seg * cols + c] += tx.values()[r * cols + c];
                }
            }
            let inv = 1.0 / len as f64;
            for c in 0..cols {
                values[seg * cols + c] *= inv;
            }
            start += len;
        }
        let value = Tensor::new(vec![lens.len(), cols], values)?;
        Ok(self.push(
            Op::MeanPoolSegments {
                x,
                lens: lens.to_vec(),
            },
            value,
        ))
    }

    /// Shift rows by `offset` within one segment spanning the whole input.
    pub fn shift_rows(&mut self, x: ValueId, offset: i64) -> Result<ValueId> {
        let rows = self.require_matrix(x, "shift_rows")?.rows();
        self.shift_rows_segments(x, offset, &[rows])
    }

    /// Shift rows by `offset` within each segment, zero-filling rows that
    /// cross a segment edge. `offset = 1` moves row i to row i+1.
    pub fn shift_rows_segments(
        &mut self,
        x: ValueId,
        offset: i64,
        lens: &[usize],
    ) -> Result<ValueId> {
        let tx = self.require_matrix(x, "shift_rows")?;
        let (rows, cols) = (tx.rows(), tx.cols());
        check_segments(lens, rows)?;
        let mut values = vec![0.0; rows * cols];
        shift_rows_into(tx.values(), &mut values, cols, offset, lens);
        let value = Tensor::new(vec![rows, cols], values)?;
        Ok(self.push(
            Op::ShiftRowsSegments {
                x,
                offset,
                lens: lens.to_vec(),
            },
            value,
        ))
    }

    /// Concatenate rank-2 tensors along rows (`axis = 0`) or columns
    /// (`axis = 1`).
    pub fn concat(&mut self, xs: &[ValueId], axis: usize) -> Result<ValueId> {
        let first = *xs.first().ok_or(AutodiffError::EmptyInput { op: "concat" })?;
        let first_shape = self.require_matrix(first, "concat")?.shape().to_vec();
        debug_assert!(axis < 2);
        for &x in xs {
            let tx = self.require_matrix(x, "concat")?;
            let same = if axis == 0 {
                tx.cols() == first_shape[1]
            } else {
                tx.rows() == first_shape[0]
            };
            if !same {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    left: first_shape,
                    right: tx.shape().to_vec(),
                });
            }
        }
        let value = if axis == 0 {
            let cols = first_shape[1];
            let mut values = Vec::new();
            for &x in xs {
                values.extend_from_slice(self.value(x).values());
            }
            let rows = values.len() / cols;
            Tensor::new(vec![rows, cols], values)?
        } else {
            let rows = first_shape[0];
            let total: usize = xs.iter().map(|&x| self.value(x).cols()).sum();
            let mut values = vec![0.0; rows * total];
            let mut col0 = 0;
            for &x in xs {
                let tx = self.value(x);
                let c = tx.cols();
                for r in 0..rows {
                    values[r * total + col0..r * total + col0 + c]
                        .copy_from_slice(&tx.values()[r * c..(r + 1) * c]);
                }
                col0 += c;
            }
            Tensor::new(vec![rows, total], values)?
        };
        Ok(self.push(
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
            value,
        ))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: ValueId) -> ValueId {
        let total = self.value(x).values().iter().sum();
        self.push(Op::Sum { x }, Tensor::scalar(total))
    }

    /// x scaled by entry (row, col) of a matrix node; differentiable through
    /// both the entry and x.
    pub fn scale_by_entry(
        &mut self,
        matrix: ValueId,
        row: usize,
        col: usize,
        x: ValueId,
    ) -> Result<ValueId> {
        let tm = self.require_matrix(matrix, "scale_by_entry")?;
        if row >= tm.rows() || col >= tm.cols() {
            return Err(AutodiffError::ShapeMismatch {
                op: "scale_by_entry",
                left: tm.shape().to_vec(),
                right: vec![row, col],
            });
        }
        let factor = tm.at(row, col);
        let tx = self.value(x);
        let values = tx.values().iter().map(|v| v * factor).collect();
        let value = Tensor::new(tx.shape().to_vec(), values)?;
        Ok(self.push(Op::ScaleByEntry { matrix, row, col, x }, value))
    }

    fn require_matrix(&self, x: ValueId, op: &'static str) -> Result<&Tensor> {
        let tx = self.value(x);
        if tx.shape().len() != 2 {
            return Err(AutodiffError::BadRank {
                op,
                expected: 2,
                got: tx.shape().to_vec(),
            });
        }
        Ok(tx)
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Returns gradients for every node the
    /// loss reaches; call sites pick out the leaves they care about.
    pub fn backward(&self, loss: ValueId) -> Result<GradientMap> {
        if !self.value(loss).is_scalar() {
            return Err(AutodiffError::NonScalarLoss(
                self.value(loss).shape().to_vec(),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(out_grad) = grads[idx].take() else {
                continue;
            };
            self.backward_op(idx, &out_grad, &mut grads);
            grads[idx] = Some(out_grad);
        }

        let tensors = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|values| {
                    Tensor::new(self.nodes[i].value.shape().to_vec(), values)
                        .expect("gradient shape matches value shape")
                })
            })
            .collect();
        Ok(GradientMap { grads: tensors })
    }

    /// Backward pass that accumulates gradients of all registered parameters
    /// into `params`. Repeated calls without clearing accumulate.
    pub fn backward_into(&self, loss: ValueId, params: &mut ParamSet) -> Result<()> {
        let map = self.backward(loss)?;
        for (&pid, &vid) in &self.param_nodes {
            if let Some(g) = map.wrt(vid) {
                params.accumulate_grad(pid, g.values());
            }
        }
        params.mark_grads_populated();
        Ok(())
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Vec<f64>>],
        target: ValueId,
        contribution: impl FnOnce(&mut [f64]),
    ) {
        let slot = &mut grads[target.0];
        if slot.is_none() {
            *slot = Some(vec![0.0; self.nodes[target.0].value.len()]);
        }
        contribution(slot.as_mut().expect("just filled"));
    }

    fn backward_op(&self, idx: usize, out_grad: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                self.accumulate(grads, *a, |ga| {
                    // dL/da += dL/dc . b^T
                    for i in 0..m {
                        for j in 0..n {
                            let g = out_grad[i * n + j];
                            for p in 0..k {
                                ga[i * k + p] += g * tb.values()[p * n + j];
                            }
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    // dL/db += a^T . dL/dc
                    for i in 0..m {
                        for p in 0..k {
                            let av = ta.values()[i * k + p];
                            for j in 0..n {
                                gb[p * n + j] += av * out_grad[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, |g| add_into(g, out_grad, 1.0));
                self.accumulate(grads, *b, |g| add_into(g, out_grad, 1.0));
            }
            Op::AddBias { x, bias } => {
                self.accumulate(grads, *x, |g| add_into(g, out_grad, 1.0));
                let c = self.value(*bias).len();
                self.accumulate(grads, *bias, |g| {
                    for (i, v) in out_grad.iter().enumerate() {
                        g[i % c] += v;
                    }
                });
            }
            Op::Mul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |g| {
                    for ((gi, oi), bi) in g.iter_mut().zip(out_grad).zip(tb.values()) {
                        *gi += oi * bi;
                    }
                });
                self.accumulate(grads, *b, |g| {
                    for ((gi, oi), ai) in g.iter_mut().zip(out_grad).zip(ta.values()) {
                        *gi += oi * ai;
                    }
                });
            }
            Op::Scale { x, factor } => {
                let f = *factor;
                self.accumulate(grads, *x, |g| add_into(g, out_grad, f));
            }
            Op::AddN { xs } => {
                for &x in xs {
                    self.accumulate(grads, x, |g| add_into(g, out_grad, 1.0));
                }
            }
            Op::Tanh { x } => {
                let y = node.value.values();
                self.accumulate(grads, *x, |g| {
                    for ((gi, oi), yi) in g.iter_mut().zip(out_grad).zip(y) {
                        *gi += oi * (1.0 - yi * yi);
                    }
                });
            }
            Op::Softmax { x } => {
                let y = node.value.values();
                let width = *node.value.shape().last().expect("rank checked");
                self.accumulate(grads, *x, |g| {
                    for row in 0..y.len() / width {
                        let off = row * width;
                        let yr = &y[off..off + width];
                        let or = &out_grad[off..off + width];
                        let dot: f64 = yr.iter().zip(or).map(|(a, b)| a * b).sum();
                        for j in 0..width {
                            g[off + j] += yr[j] * (or[j] - dot);
                        }
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let k = self.value(*logits).cols();
                let scale = out_grad[0] / targets.len() as f64;
                self.accumulate(grads, *logits, |g| {
                    for (row, &t) in targets.iter().enumerate() {
                        for j in 0..k {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            g[row * k + j] += scale * (probs[row * k + j] - onehot);
                        }
                    }
                });
            }
            Op::GradReverse { x, lambda } => {
                let neg = -lambda;
                self.accumulate(grads, *x, |g| add_into(g, out_grad, neg));
            }
            Op::Embedding { table, indices } => {
                let width = self.value(*table).cols();
                self.accumulate(grads, *table, |g| {
                    for (row, &ix) in indices.iter().enumerate() {
                        for c in 0..width {
                            g[ix * width + c] += out_grad[row * width + c];
                        }
                    }
                });
            }
            Op::MeanPoolSegments { x, lens } => {
                let cols = self.value(*x).cols();
                self.accumulate(grads, *x, |g| {
                    let mut start = 0;
                    for (seg, &len) in lens.iter().enumerate() {
                        let inv = 1.0 / len as f64;
                        for r in start..start + len {
                            for c in 0..cols {
                                g[r * cols + c] += out_grad[seg * cols + c] * inv;
                            }
                        }
                        start += len;
                    }
                });
            }
            Op::ShiftRowsSegments { x, offset, lens } => {
                let cols = self.value(*x).cols();
                let mut back = vec![0.0; self.value(*x).len()];
                // Forward moved row i to i+offset, so gradients move back.
                shift_rows_into(out_grad, &mut back, cols, -offset, lens);
                self.accumulate(grads, *x, |g| add_into(g, &back, 1.0));
            }
            Op::Concat { xs, axis } => {
                if *axis == 0 {
                    let mut row0 = 0;
                    for &x in xs {
                        let tx = self.value(x);
                        let (r, c) = (tx.rows(), tx.cols());
                        self.accumulate(grads, x, |g| {
                            g.iter_mut()
                                .zip(&out_grad[row0 * c..(row0 + r) * c])
                                .for_each(|(gi, oi)| *gi += oi);
                        });
                        row0 += r;
                    }
                } else {
                    let total = node.value.cols();
                    let rows = node.value.rows();
                    let mut col0 = 0;
                    for &x in xs {
                        let c = self.value(x).cols();
                        self.accumulate(grads, x, |g| {
                            for r in 0..rows {
                                for j in 0..c {
                                    g[r * c + j] += out_grad[r * total + col0 + j];
                                }
                            }
                        });
                        col0 += c;
                    }
                }
            }
            Op::Sum { x } => {
                let g0 = out_grad[0];
                self.accumulate(grads, *x, |g| g.iter_mut().for_each(|gi| *gi += g0));
            }
            Op::ScaleByEntry { matrix, row, col, x } => {
                let factor = self.value(*matrix).at(*row, *col);
                let tx = self.value(*x);
                self.accumulate(grads, *x, |g| add_into(g, out_grad, factor));
                let dot: f64 = out_grad.iter().zip(tx.values()).map(|(a, b)| a * b).sum();
                let cols = self.value(*matrix).cols();
                let (r, c) = (*row, *col);
                self.accumulate(grads, *matrix, |g| g[r * cols + c] += dot);
            }
        }
    }
}

fn add_into(acc: &mut [f64], src: &[f64], factor: f64) {
    for (a, s) in acc.iter_mut().zip(src) {
        *a += s * factor;
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

fn softmax_rows(values: &mut [f64], width: usize) {
    for row in values.chunks_mut(width) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn shift_rows_into(src: &[f64], dst: &mut [f64], cols: usize, offset: i64, lens: &[usize]) {
    let mut start = 0i64;
    for &len in lens {
        let len = len as i64;
        for r in 0..len {
            let from = r - offset;
            if from >= 0 && from < len {
                let d = ((start + r) as usize) * cols;
                let s = ((start + from) as usize) * cols;
                dst[d..d + cols].copy_from_slice(&src[s..s + cols]);
            }
        }
        start += len;
    }
}

fn check_segments(lens: &[usize], rows: usize) -> Result<()> {
    let sum: usize = lens.iter().sum();
    if sum != rows || lens.iter().any(|&l| l == 0) {
        return Err(AutodiffError::BadSegments { sum, rows });
    }
    Ok(())
}
