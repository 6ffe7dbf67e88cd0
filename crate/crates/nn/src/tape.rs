//! Reverse-mode differentiation tape.
//!
//! A [`Tape`] records the forward computation as a flat list of nodes; calling
//! [`Tape::backward`] walks the list in reverse and produces exact analytic
//! gradients for every parameter leaf. The op set is fixed: dense algebra,
//! row/column broadcasts, softmax, layer/batch normalization, dropout,
//! embedding gather, and the two losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::matrix::Matrix;
use crate::param::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    /// `x` (n x m) plus a 1 x m row, broadcast over rows.
    AddRow(Var, Var),
    /// `x` (n x m) times a 1 x m row, broadcast over rows.
    MulRow(Var, Var),
    /// `x` (n x m) times an n x 1 column, scaling each row.
    MulCol(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Transpose(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    BatchNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        softmax: Matrix,
    },
    MseLoss {
        pred: Var,
        target: Matrix,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Gradients keyed by parameter id, in id order.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    slots: Vec<(ParamId, Matrix)>,
}

impl Gradients {
    fn insert_or_add(&mut self, id: ParamId, g: &Matrix) -> Result<()> {
        match self.slots.binary_search_by_key(&id, |(i, _)| *i) {
            Ok(pos) => self.slots[pos].1.add_assign(g),
            Err(pos) => {
                self.slots.insert(pos, (id, g.clone()));
                Ok(())
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.slots.iter().map(|(i, m)| (*i, m))
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.slots
            .binary_search_by_key(&id, |(i, _)| *i)
            .ok()
            .map(|pos| &self.slots[pos].1)
    }

    pub fn max_abs(&self) -> f64 {
        self.slots
            .iter()
            .fold(0.0f64, |m, (_, g)| m.max(g.max_abs()))
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        check_same("add", va, vb)?;
        let mut value = va.clone();
        value.add_assign(vb)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        check_same("sub", va, vb)?;
        let mut value = va.clone();
        for (x, y) in value.data_mut().iter_mut().zip(vb.data().iter()) {
            *x -= y;
        }
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        check_same("hadamard", va, vb)?;
        let mut value = va.clone();
        for (x, y) in value.data_mut().iter_mut().zip(vb.data().iter()) {
            *x *= y;
        }
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (vx, vr) = (self.value(x), self.value(row));
        check_row("add_row", vx, vr)?;
        let mut value = vx.clone();
        let r = vr.data();
        for i in 0..value.rows() {
            for (o, b) in value.row_mut(i).iter_mut().zip(r.iter()) {
                *o += b;
            }
        }
        Ok(self.push(value, Op::AddRow(x, row)))
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (vx, vr) = (self.value(x), self.value(row));
        check_row("mul_row", vx, vr)?;
        let mut value = vx.clone();
        let r = vr.data();
        for i in 0..value.rows() {
            for (o, b) in value.row_mut(i).iter_mut().zip(r.iter()) {
                *o *= b;
            }
        }
        Ok(self.push(value, Op::MulRow(x, row)))
    }

    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (vx, vc) = (self.value(x), self.value(col));
        if vc.cols() != 1 || vc.rows() != vx.rows() {
            return Err(NnError::ShapeMismatch {
                op: "mul_col",
                lhs_rows: vx.rows(),
                lhs_cols: vx.cols(),
                rhs_rows: vc.rows(),
                rhs_cols: vc.cols(),
            });
        }
        let mut value = vx.clone();
        for i in 0..value.rows() {
            let s = vc.get(i, 0);
            for o in value.row_mut(i) {
                *o *= s;
            }
        }
        Ok(self.push(value, Op::MulCol(x, col)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(value, Op::Scale(x, c))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(value, Op::Sigmoid(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let mut value = vx.clone();
        for i in 0..value.rows() {
            softmax_in_place(value.row_mut(i));
        }
        self.push(value, Op::SoftmaxRows(x))
    }

    /// Per-row zero mean / unit variance, then `gain` and `bias` (both 1 x m).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let vx = self.value(x);
        check_row("layer_norm/gain", vx, self.value(gain))?;
        check_row("layer_norm/bias", vx, self.value(bias))?;
        let (n, m) = vx.shape();
        let mut xhat = Matrix::zeros(n, m);
        let mut inv_std = vec![0.0; n];
        for i in 0..n {
            let row = vx.row(i);
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[i] = inv;
            for (j, &v) in row.iter().enumerate() {
                xhat.set(i, j, (v - mean) * inv);
            }
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut value = xhat.clone();
        for i in 0..n {
            for (j, o) in value.row_mut(i).iter_mut().enumerate() {
                *o = *o * g[j] + b[j];
            }
        }
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        self.push(value, Op::Transpose(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let vx = self.value(x);
        if start + len > vx.cols() {
            return Err(NnError::ShapeMismatch {
                op: "slice_cols",
                lhs_rows: vx.rows(),
                lhs_cols: vx.cols(),
                rhs_rows: start,
                rhs_cols: len,
            });
        }
        let mut value = Matrix::zeros(vx.rows(), len);
        for i in 0..vx.rows() {
            value
                .row_mut(i)
                .copy_from_slice(&vx.row(i)[start..start + len]);
        }
        Ok(self.push(value, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Matrix::zeros(n, total);
        let mut offset = 0;
        for &p in parts {
            let vp = self.value(p);
            if vp.rows() != n {
                return Err(NnError::ShapeMismatch {
                    op: "concat_cols",
                    lhs_rows: n,
                    lhs_cols: total,
                    rhs_rows: vp.rows(),
                    rhs_cols: vp.cols(),
                });
            }
            for i in 0..n {
                value.row_mut(i)[offset..offset + vp.cols()].copy_from_slice(vp.row(i));
            }
            offset += vp.cols();
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut value = Matrix::zeros(total, m);
        let mut offset = 0;
        for &p in parts {
            let vp = self.value(p);
            if vp.cols() != m {
                return Err(NnError::ShapeMismatch {
                    op: "concat_rows",
                    lhs_rows: total,
                    lhs_cols: m,
                    rhs_rows: vp.rows(),
                    rhs_cols: vp.cols(),
                });
            }
            for i in 0..vp.rows() {
                value.row_mut(offset + i).copy_from_slice(vp.row(i));
            }
            offset += vp.rows();
        }
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    /// Mean over rows: n x m -> 1 x m.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let (n, m) = vx.shape();
        let mut value = Matrix::zeros(1, m);
        for i in 0..n {
            for (j, &v) in vx.row(i).iter().enumerate() {
                value.data_mut()[j] += v;
            }
        }
        for v in value.data_mut() {
            *v /= n as f64;
        }
        self.push(value, Op::MeanRows(x))
    }

    /// Inverted dropout: kept entries scaled by 1/(1-p). Identity when p == 0.
    pub fn dropout(&mut self, x: Var, p: f64, seed: u64) -> Var {
        if p <= 0.0 {
            return x;
        }
        let vx = self.value(x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..vx.len())
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mut value = vx.clone();
        for (v, m) in value.data_mut().iter_mut().zip(mask.iter()) {
            *v *= m;
        }
        self.push(value, Op::Dropout { x, mask })
    }

    /// Select rows of `table` by index (with repetition); backward scatter-adds.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let vt = self.value(table);
        let m = vt.cols();
        let mut value = Matrix::zeros(ids.len(), m);
        for (i, &id) in ids.iter().enumerate() {
            if id >= vt.rows() {
                return Err(NnError::LabelOutOfRange {
                    label: id,
                    classes: vt.rows(),
                });
            }
            value.row_mut(i).copy_from_slice(vt.row(id));
        }
        Ok(self.push(
            value,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Training-mode batch normalization over rows (per-column statistics).
    /// Running statistics live in `store` buffers and are updated here when
    /// `update_running` is set (momentum convention: new = (1-mom)*old + mom*batch,
    /// unbiased variance in the running estimate).
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gain: Var,
        bias: Var,
        store: &mut ParamStore,
        running_mean: crate::param::BufferId,
        running_var: crate::param::BufferId,
        momentum: f64,
        eps: f64,
        update_running: bool,
    ) -> Result<Var> {
        let vx = self.value(x);
        let (n, m) = vx.shape();
        if n < 2 {
            return Err(NnError::BatchTooSmall { rows: n });
        }
        check_row("batch_norm/gain", vx, self.value(gain))?;
        check_row("batch_norm/bias", vx, self.value(bias))?;
        let mut mean = vec![0.0; m];
        let mut var = vec![0.0; m];
        for i in 0..n {
            for (j, &v) in vx.row(i).iter().enumerate() {
                mean[j] += v;
            }
        }
        for mj in mean.iter_mut() {
            *mj /= n as f64;
        }
        for i in 0..n {
            for (j, &v) in vx.row(i).iter().enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
        for vj in var.iter_mut() {
            *vj /= n as f64;
        }
        let mut xhat = Matrix::zeros(n, m);
        let mut inv_std = vec![0.0; m];
        for (j, inv) in inv_std.iter_mut().enumerate() {
            *inv = 1.0 / (var[j] + eps).sqrt();
        }
        for i in 0..n {
            for j in 0..m {
                xhat.set(i, j, (vx.get(i, j) - mean[j]) * inv_std[j]);
            }
        }
        if update_running {
            let unbias = n as f64 / (n as f64 - 1.0);
            {
                let rm = store.buffer_mut(running_mean);
                for (j, r) in rm.data_mut().iter_mut().enumerate() {
                    *r = (1.0 - momentum) * *r + momentum * mean[j];
                }
            }
            {
                let rv = store.buffer_mut(running_var);
                for (j, r) in rv.data_mut().iter_mut().enumerate() {
                    *r = (1.0 - momentum) * *r + momentum * var[j] * unbias;
                }
            }
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut value = xhat.clone();
        for i in 0..n {
            for (j, o) in value.row_mut(i).iter_mut().enumerate() {
                *o = *o * g[j] + b[j];
            }
        }
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Mean cross-entropy over rows: `-log softmax(logits_i)[labels_i]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let vl = self.value(logits);
        let (n, k) = vl.shape();
        if labels.len() != n {
            return Err(NnError::ShapeMismatch {
                op: "cross_entropy",
                lhs_rows: n,
                lhs_cols: k,
                rhs_rows: labels.len(),
                rhs_cols: 1,
            });
        }
        let mut softmax = vl.clone();
        let mut total = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(NnError::LabelOutOfRange { label, classes: k });
            }
            let row = softmax.row_mut(i);
            let log_probs = log_softmax(row);
            total -= log_probs[label];
            softmax_in_place(row);
        }
        let value = Matrix::from_vec(1, 1, vec![total / n as f64])?;
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                softmax,
            },
        ))
    }

    /// Mean squared error over all entries against a constant target.
    pub fn mse(&mut self, pred: Var, target: Matrix) -> Result<Var> {
        let vp = self.value(pred);
        check_same("mse", vp, &target)?;
        let n = vp.len() as f64;
        let sse: f64 = vp
            .data()
            .iter()
            .zip(target.data().iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let value = Matrix::from_vec(1, 1, vec![sse / n])?;
        Ok(self.push(value, Op::MseLoss { pred, target }))
    }

    /// Reverse pass from a scalar loss; returns gradients for parameter leaves.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let (lr, lc) = self.value(loss).shape();
        if (lr, lc) != (1, 1) {
            return Err(NnError::NonScalarLoss { rows: lr, cols: lc });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out = Gradients::default();

        for idx in (0..self.nodes.len()).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            // split borrows: everything before idx can receive gradient
            let (before, rest) = self.nodes.split_at_mut(idx);
            let node = &rest[0];
            let add = |v: Var, delta: Matrix, grads: &mut Vec<Option<Matrix>>| {
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&delta).expect("grad shape"),
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.insert_or_add(*id, &g)?,
                Op::MatMul(a, b) => {
                    let va = &before[a.0].value;
                    let vb = &before[b.0].value;
                    let da = g.matmul(&vb.transpose())?;
                    let db = va.transpose().matmul(&g)?;
                    add(*a, da, &mut grads);
                    add(*b, db, &mut grads);
                }
                Op::Add(a, b) => {
                    add(*a, g.clone(), &mut grads);
                    add(*b, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    add(*a, g.clone(), &mut grads);
                    add(*b, g.map(|v| -v), &mut grads);
                }
                Op::Hadamard(a, b) => {
                    let va = &before[a.0].value;
                    let vb = &before[b.0].value;
                    let mut da = g.clone();
                    for (x, y) in da.data_mut().iter_mut().zip(vb.data().iter()) {
                        *x *= y;
                    }
                    let mut db = g;
                    for (x, y) in db.data_mut().iter_mut().zip(va.data().iter()) {
                        *x *= y;
                    }
                    add(*a, da, &mut grads);
                    add(*b, db, &mut grads);
                }
                Op::AddRow(x, row) => {
                    let m = g.cols();
                    let mut dr = Matrix::zeros(1, m);
                    for i in 0..g.rows() {
                        for (j, &v) in g.row(i).iter().enumerate() {
                            dr.data_mut()[j] += v;
                        }
                    }
                    add(*x, g, &mut grads);
                    add(*row, dr, &mut grads);
                }
                Op::MulRow(x, row) => {
                    let vx = &before[x.0].value;
                    let vr = &before[row.0].value;
                    let m = g.cols();
                    let mut dx = g.clone();
                    for i in 0..dx.rows() {
                        for (j, v) in dx.row_mut(i).iter_mut().enumerate() {
                            *v *= vr.data()[j];
                        }
                    }
                    let mut dr = Matrix::zeros(1, m);
                    for i in 0..g.rows() {
                        for (j, &v) in g.row(i).iter().enumerate() {
                            dr.data_mut()[j] += v * vx.get(i, j);
                        }
                    }
                    add(*x, dx, &mut grads);
                    add(*row, dr, &mut grads);
                }
                Op::MulCol(x, col) => {
                    let vx = &before[x.0].value;
                    let vc = &before[col.0].value;
                    let mut dx = g.clone();
                    for i in 0..dx.rows() {
                        let s = vc.get(i, 0);
                        for v in dx.row_mut(i) {
                            *v *= s;
                        }
                    }
                    let mut dc = Matrix::zeros(g.rows(), 1);
                    for i in 0..g.rows() {
                        let dot: f64 = g
                            .row(i)
                            .iter()
                            .zip(vx.row(i).iter())
                            .map(|(a, b)| a * b)
                            .sum();
                        dc.set(i, 0, dot);
                    }
                    add(*x, dx, &mut grads);
                    add(*col, dc, &mut grads);
                }
                Op::Scale(x, c) => {
                    add(*x, g.map(|v| v * c), &mut grads);
                }
                Op::Relu(x) => {
                    let vx = &before[x.0].value;
                    let mut dx = g;
                    for (v, &xv) in dx.data_mut().iter_mut().zip(vx.data().iter()) {
                        if xv <= 0.0 {
                            *v = 0.0;
                        }
                    }
                    add(*x, dx, &mut grads);
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let mut dx = g;
                    for (v, &yv) in dx.data_mut().iter_mut().zip(y.data().iter()) {
                        *v *= yv * (1.0 - yv);
                    }
                    add(*x, dx, &mut grads);
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let mut dx = g;
                    for i in 0..dx.rows() {
                        let yr = y.row(i);
                        let dot: f64 = dx.row(i).iter().zip(yr.iter()).map(|(a, b)| a * b).sum();
                        for (v, &yv) in dx.row_mut(i).iter_mut().zip(yr.iter()) {
                            *v = yv * (*v - dot);
                        }
                    }
                    add(*x, dx, &mut grads);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let vgain = &before[gain.0].value;
                    let (n, m) = g.shape();
                    let mut dgain = Matrix::zeros(1, m);
                    let mut dbias = Matrix::zeros(1, m);
                    let mut dx = Matrix::zeros(n, m);
                    for i in 0..n {
                        let gr = g.row(i);
                        let xr = xhat.row(i);
                        for j in 0..m {
                            dgain.data_mut()[j] += gr[j] * xr[j];
                            dbias.data_mut()[j] += gr[j];
                        }
                        // h = g ⊙ gain; dx = inv_std (h - mean(h) - xhat * mean(h ⊙ xhat))
                        let h: Vec<f64> = gr
                            .iter()
                            .zip(vgain.data().iter())
                            .map(|(a, b)| a * b)
                            .collect();
                        let mean_h = h.iter().sum::<f64>() / m as f64;
                        let mean_hx =
                            h.iter().zip(xr.iter()).map(|(a, b)| a * b).sum::<f64>() / m as f64;
                        for j in 0..m {
                            dx.set(i, j, inv_std[i] * (h[j] - mean_h - xr[j] * mean_hx));
                        }
                    }
                    add(*x, dx, &mut grads);
                    add(*gain, dgain, &mut grads);
                    add(*bias, dbias, &mut grads);
                }
                Op::Transpose(x) => {
                    add(*x, g.transpose(), &mut grads);
                }
                Op::SliceCols { x, start } => {
                    let vx = &before[x.0].value;
                    let mut dx = Matrix::zeros(vx.rows(), vx.cols());
                    for i in 0..g.rows() {
                        dx.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    add(*x, dx, &mut grads);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = before[p.0].value.cols();
                        let mut dp = Matrix::zeros(g.rows(), cols);
                        for i in 0..g.rows() {
                            dp.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + cols]);
                        }
                        add(p, dp, &mut grads);
                        offset += cols;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = before[p.0].value.rows();
                        let mut dp = Matrix::zeros(rows, g.cols());
                        for i in 0..rows {
                            dp.row_mut(i).copy_from_slice(g.row(offset + i));
                        }
                        add(p, dp, &mut grads);
                        offset += rows;
                    }
                }
                Op::MeanRows(x) => {
                    let vx = &before[x.0].value;
                    let n = vx.rows();
                    let mut dx = Matrix::zeros(n, vx.cols());
                    for i in 0..n {
                        for (j, v) in dx.row_mut(i).iter_mut().enumerate() {
                            *v = g.data()[j] / n as f64;
                        }
                    }
                    add(*x, dx, &mut grads);
                }
                Op::Dropout { x, mask } => {
                    let mut dx = g;
                    for (v, m) in dx.data_mut().iter_mut().zip(mask.iter()) {
                        *v *= m;
                    }
                    add(*x, dx, &mut grads);
                }
                Op::GatherRows { table, ids } => {
                    let vt = &before[table.0].value;
                    let mut dt = Matrix::zeros(vt.rows(), vt.cols());
                    for (i, &id) in ids.iter().enumerate() {
                        for (j, &v) in g.row(i).iter().enumerate() {
                            dt.row_mut(id)[j] += v;
                        }
                    }
                    add(*table, dt, &mut grads);
                }
                Op::BatchNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let vgain = &before[gain.0].value;
                    let (n, m) = g.shape();
                    let nf = n as f64;
                    let mut dgain = Matrix::zeros(1, m);
                    let mut dbias = Matrix::zeros(1, m);
                    let mut sum_g = vec![0.0; m];
                    let mut sum_gx = vec![0.0; m];
                    for i in 0..n {
                        for j in 0..m {
                            let gv = g.get(i, j);
                            dgain.data_mut()[j] += gv * xhat.get(i, j);
                            dbias.data_mut()[j] += gv;
                            sum_g[j] += gv;
                            sum_gx[j] += gv * xhat.get(i, j);
                        }
                    }
                    let mut dx = Matrix::zeros(n, m);
                    for i in 0..n {
                        for j in 0..m {
                            let gv = g.get(i, j);
                            let d = (vgain.data()[j] * inv_std[j] / nf)
                                * (nf * gv - sum_g[j] - xhat.get(i, j) * sum_gx[j]);
                            dx.set(i, j, d);
                        }
                    }
                    add(*x, dx, &mut grads);
                    add(*gain, dgain, &mut grads);
                    add(*bias, dbias, &mut grads);
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    softmax,
                } => {
                    let upstream = g.get(0, 0);
                    let n = labels.len() as f64;
                    let mut dl = softmax.clone();
                    for (i, &label) in labels.iter().enumerate() {
                        dl.row_mut(i)[label] -= 1.0;
                        for v in dl.row_mut(i) {
                            *v *= upstream / n;
                        }
                    }
                    add(*logits, dl, &mut grads);
                }
                Op::MseLoss { pred, target } => {
                    let upstream = g.get(0, 0);
                    let vp = &before[pred.0].value;
                    let n = vp.len() as f64;
                    let mut dp = vp.clone();
                    for (v, t) in dp.data_mut().iter_mut().zip(target.data().iter()) {
                        *v = 2.0 * (*v - t) * upstream / n;
                    }
                    add(*pred, dp, &mut grads);
                }
            }
        }
        Ok(out)
    }
}

fn check_same(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch {
            op,
            lhs_rows: a.rows(),
            lhs_cols: a.cols(),
            rhs_rows: b.rows(),
            rhs_cols: b.cols(),
        });
    }
    Ok(())
}

fn check_row(op: &'static str, x: &Matrix, row: &Matrix) -> Result<()> {
    if row.rows() != 1 || row.cols() != x.cols() {
        return Err(NnError::ShapeMismatch {
            op,
            lhs_rows: x.rows(),
            lhs_cols: x.cols(),
            rhs_rows: row.rows(),
            rhs_cols: row.cols(),
        });
    }
    Ok(())
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|&v| v - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(vec![3.0, 3.0, 3.0, 3.0]));
        let y = tape.softmax_rows(x);
        for &v in tape.value(y).data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
        let sum: f64 = tape.value(y).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(vec![0.0]));
        let y = tape.sigmoid(x);
        assert_eq!(tape.value(y).get(0, 0), 0.5);
    }

    #[test]
    fn cross_entropy_uniform_two_class() {
        let mut tape = Tape::new();
        let logits = tape.constant(Matrix::row_vector(vec![0.0, 0.0]));
        let loss = tape.cross_entropy(logits, &[0]).unwrap();
        assert!((tape.scalar(loss) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut tape = Tape::new();
        let logits = tape.constant(Matrix::row_vector(vec![0.0, 0.0]));
        assert!(matches!(
            tape.cross_entropy(logits, &[2]),
            Err(NnError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn mse_of_identical_is_zero() {
        let mut tape = Tape::new();
        let pred = tape.constant(Matrix::row_vector(vec![1.0, 2.0]));
        let loss = tape.mse(pred, Matrix::row_vector(vec![1.0, 2.0])).unwrap();
        assert_eq!(tape.scalar(loss), 0.0);
    }

    #[test]
    fn constant_row_layer_norm_is_zero_pre_affine() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(vec![5.0, 5.0, 5.0]));
        let gain = tape.constant(Matrix::row_vector(vec![1.0, 1.0, 1.0]));
        let bias = tape.constant(Matrix::row_vector(vec![0.0, 0.0, 0.0]));
        let y = tape.layer_norm(x, gain, bias, 1e-5).unwrap();
        for &v in tape.value(y).data() {
            assert!(v.abs() < 1e-9);
        }
    }
}
