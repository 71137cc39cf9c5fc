//! Tape-based reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and `backward` is a single reverse sweep.

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Gather { table: Var, ids: Vec<usize> },
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Gelu(Var),
    Sigmoid(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
    MaskedSoftmax(Var),
    LogSoftmax(Var),
    Nll { x: Var, targets: Vec<usize>, mask: Vec<bool> },
    BceWithLogits { x: Var, target: f64 },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Counters from one backward sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BackwardStats {
    pub nodes_on_tape: usize,
    pub nodes_visited: usize,
}

/// Computation graph for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape2(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Binds a parameter's current value onto the tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.value.clone(), Op::Param(id), p.trainable)
    }

    /// Selects rows of a matrix by index (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.shape2(table);
        if ids.is_empty() {
            return Err(Error::Shape("gather with no indices".into()));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index(format!("row {id} of table with {rows} rows")));
            }
            out.extend_from_slice(&src[id * cols..(id + 1) * cols]);
        }
        let value = Tensor::new(vec![ids.len(), cols], out)?;
        let rg = self.rg(table);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!("add: {:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// `x[n×k] + b[k]`, broadcasting `b` over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let k = tx.cols();
        if tb.numel() != k {
            return Err(Error::Shape(format!("add_row: {:?} + {:?}", tx.shape(), tb.shape())));
        }
        let bias = tb.data();
        let data = tx
            .data()
            .chunks(k)
            .flat_map(|row| row.iter().zip(bias).map(|(v, b)| v + b))
            .collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(value, Op::AddRow(x, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!("mul: {:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// `x[n×k] * g[k]`, broadcasting `g` over rows.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Result<Var> {
        let (tx, tg) = (self.value(x), self.value(g));
        let k = tx.cols();
        if tg.numel() != k {
            return Err(Error::Shape(format!("mul_row: {:?} * {:?}", tx.shape(), tg.shape())));
        }
        let gain = tg.data();
        let data = tx
            .data()
            .chunks(k)
            .flat_map(|row| row.iter().zip(gain).map(|(v, g)| v * g))
            .collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(g);
        Ok(self.push(value, Op::MulRow(x, g), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, factor), rg)
    }

    /// Matrix product `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape2(a);
        let (k2, n) = self.shape2(b);
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul: {:?} x {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        kernel_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `a[m×k] · b[n×k]ᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape2(a);
        let (n, k2) = self.shape2(b);
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul_nt: {:?} x {:?}^T",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        kernel_nt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMulNT(a, b), rg))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.shape2(x);
        if len == 0 || start + len > rows {
            return Err(Error::Shape(format!("slice_rows {start}..{} of {rows}", start + len)));
        }
        let data = self.value(x).data()[start * cols..(start + len) * cols].to_vec();
        let value = Tensor::new(vec![len, cols], data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::SliceRows { x, start }, rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.shape2(x);
        if len == 0 || start + len > cols {
            return Err(Error::Shape(format!("slice_cols {start}..{} of {cols}", start + len)));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let value = Tensor::new(vec![rows, len], data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.shape2(p).0,
            None => return Err(Error::Shape("concat of nothing".into())),
        };
        if parts.iter().any(|&p| self.shape2(p).0 != rows) {
            return Err(Error::Shape("concat_cols: row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.shape2(p).1).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor::new(vec![rows, total], data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx
            .data()
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()))
            .collect();
        let value = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Gelu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| sigmoid(v)).collect();
        let value = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Sigmoid(x), rg)
    }

    /// Row-wise standardisation without affine parameters.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let tx = self.value(x);
        let k = tx.cols();
        let mut data = Vec::with_capacity(tx.numel());
        let mut inv_std = Vec::with_capacity(tx.rows());
        for row in tx.data().chunks(k) {
            let mean = row.iter().sum::<f64>() / k as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            data.extend(row.iter().map(|v| (v - mean) * is));
        }
        let value = Tensor::new(tx.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::LayerNorm { x, inv_std }, rg)
    }

    /// Inverted dropout. `rng = None` means evaluation mode (identity).
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: Option<&mut R>) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        let rng = match rng {
            Some(rng) if p > 0.0 => rng,
            _ => return Ok(x),
        };
        let keep = 1.0 / (1.0 - p);
        let tx = self.value(x);
        let mask: Vec<f64> = (0..tx.numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = tx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    /// Row-wise softmax restricted to columns where `key_mask` is true;
    /// masked columns get exactly zero weight.
    pub fn masked_softmax(&mut self, x: Var, key_mask: &[bool]) -> Result<Var> {
        let tx = self.value(x);
        let k = tx.cols();
        if key_mask.len() != k {
            return Err(Error::Shape(format!(
                "mask of length {} for {k} columns",
                key_mask.len()
            )));
        }
        let mut data = vec![0.0; tx.numel()];
        for (row, out) in tx.data().chunks(k).zip(data.chunks_mut(k)) {
            let max = row
                .iter()
                .zip(key_mask)
                .filter(|(_, &m)| m)
                .fold(f64::NEG_INFINITY, |a, (&v, _)| a.max(v));
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut z = 0.0;
            for j in 0..k {
                if key_mask[j] {
                    out[j] = (row[j] - max).exp();
                    z += out[j];
                }
            }
            out.iter_mut().for_each(|v| *v /= z);
        }
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::MaskedSoftmax(x), rg))
    }

    /// Row-wise log-softmax over the last axis, stabilised by max-subtraction.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if let Some(bad) = tx.data().iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("log_softmax input contains {bad}")));
        }
        let k = tx.cols();
        let mut data = Vec::with_capacity(tx.numel());
        for row in tx.data().chunks(k) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|v| v - lse));
        }
        let value = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::LogSoftmax(x), rg))
    }

    /// Sum of `-log_probs[i][targets[i]]` over positions with `mask[i]`.
    pub fn nll_loss(&mut self, log_probs: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let (n, k) = self.shape2(log_probs);
        if targets.len() != n || mask.len() != n {
            return Err(Error::Shape(format!(
                "nll_loss: {n} rows, {} targets, {} mask entries",
                targets.len(),
                mask.len()
            )));
        }
        let lp = self.value(log_probs);
        let mut total = 0.0;
        for (i, (&t, &m)) in targets.iter().zip(mask).enumerate() {
            if !m {
                continue;
            }
            if t >= k {
                return Err(Error::Index(format!("target {t} at position {i} with {k} classes")));
            }
            total -= lp.at(i, t);
        }
        let rg = self.rg(log_probs);
        Ok(self.push(
            Tensor::scalar(total),
            Op::Nll {
                x: log_probs,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
            rg,
        ))
    }

    /// `-log P(target)` with `P = sigmoid(logit)`, computed stably.
    pub fn bce_with_logits(&mut self, logit: Var, target: f64) -> Result<Var> {
        let t = self.value(logit);
        if !t.is_scalar() {
            return Err(Error::Shape(format!("bce on {:?}", t.shape())));
        }
        let z = t.item();
        let loss = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();
        let rg = self.rg(logit);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits { x: logit, target },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    /// Reverse sweep from a scalar `loss`, accumulating into `store` gradients.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<BackwardStats> {
        self.backward_with(loss, |id, g| store.accumulate(id, g))
    }

    /// Reverse sweep that hands each parameter gradient to `sink`.
    pub fn backward_with(
        &self,
        loss: Var,
        mut sink: impl FnMut(ParamId, &[f64]),
    ) -> Result<BackwardStats> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward from non-scalar of shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut stats = BackwardStats {
            nodes_on_tape: self.nodes.len(),
            nodes_visited: 0,
        };
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            stats.nodes_visited += 1;
            self.propagate(node, &g, &mut grads, &mut sink);
        }
        Ok(stats)
    }

    fn propagate(
        &self,
        node: &Node,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        sink: &mut impl FnMut(ParamId, &[f64]),
    ) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        let needs = |v: Var| nodes[v.0].requires_grad;
        match &node.op {
            Op::Input => {}
            Op::Param(id) => sink(*id, g),
            Op::Gather { table, ids } => {
                if needs(*table) {
                    let cols = val(*table).cols();
                    let acc = slot(grads, *table, val(*table).numel());
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..cols {
                            acc[id * cols + j] += g[r * cols + j];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if needs(v) {
                        add_into(slot(grads, v, g.len()), g);
                    }
                }
            }
            Op::AddRow(x, b) => {
                if needs(*x) {
                    add_into(slot(grads, *x, g.len()), g);
                }
                if needs(*b) {
                    let k = val(*b).numel();
                    let acc = slot(grads, *b, k);
                    for row in g.chunks(k) {
                        add_into(acc, row);
                    }
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let other = val(*b).data();
                    let acc = slot(grads, *a, g.len());
                    for ((s, gi), o) in acc.iter_mut().zip(g).zip(other) {
                        *s += gi * o;
                    }
                }
                if needs(*b) {
                    let other = val(*a).data();
                    let acc = slot(grads, *b, g.len());
                    for ((s, gi), o) in acc.iter_mut().zip(g).zip(other) {
                        *s += gi * o;
                    }
                }
            }
            Op::MulRow(x, gain) => {
                let k = val(*gain).numel();
                if needs(*x) {
                    let gd = val(*gain).data();
                    let acc = slot(grads, *x, g.len());
                    for (arow, grow) in acc.chunks_mut(k).zip(g.chunks(k)) {
                        for j in 0..k {
                            arow[j] += grow[j] * gd[j];
                        }
                    }
                }
                if needs(*gain) {
                    let xd = val(*x).data();
                    let acc = slot(grads, *gain, k);
                    for (xrow, grow) in xd.chunks(k).zip(g.chunks(k)) {
                        for j in 0..k {
                            acc[j] += grow[j] * xrow[j];
                        }
                    }
                }
            }
            Op::Scale(x, f) => {
                if needs(*x) {
                    let acc = slot(grads, *x, g.len());
                    for (s, gi) in acc.iter_mut().zip(g) {
                        *s += gi * f;
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let n = val(*b).cols();
                if needs(*a) {
                    // dA = dC · Bᵀ
                    let bd = val(*b).data();
                    let acc = slot(grads, *a, m * k);
                    kernel_nt(g, bd, acc, m, n, k);
                }
                if needs(*b) {
                    // dB = Aᵀ · dC
                    let ad = val(*a).data();
                    let acc = slot(grads, *b, k * n);
                    kernel_tn(ad, g, acc, m, k, n);
                }
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let n = val(*b).rows();
                if needs(*a) {
                    // dA = dC · B
                    let bd = val(*b).data();
                    let acc = slot(grads, *a, m * k);
                    kernel_nn(g, bd, acc, m, n, k);
                }
                if needs(*b) {
                    // dB = dCᵀ · A
                    let ad = val(*a).data();
                    let acc = slot(grads, *b, n * k);
                    kernel_tn(g, ad, acc, m, n, k);
                }
            }
            Op::SliceRows { x, start } => {
                if needs(*x) {
                    let cols = val(*x).cols();
                    let acc = slot(grads, *x, val(*x).numel());
                    add_into(&mut acc[start * cols..start * cols + g.len()], g);
                }
            }
            Op::SliceCols { x, start } => {
                if needs(*x) {
                    let cols = val(*x).cols();
                    let len = node.value.cols();
                    let acc = slot(grads, *x, val(*x).numel());
                    for (r, grow) in g.chunks(len).enumerate() {
                        add_into(&mut acc[r * cols + start..r * cols + start + len], grow);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).cols();
                    if needs(p) {
                        let acc = slot(grads, p, val(p).numel());
                        for (r, arow) in acc.chunks_mut(len).enumerate() {
                            add_into(arow, &g[r * total + offset..r * total + offset + len]);
                        }
                    }
                    offset += len;
                }
            }
            Op::Gelu(x) => {
                if needs(*x) {
                    let xd = val(*x).data();
                    let acc = slot(grads, *x, g.len());
                    for ((s, gi), &v) in acc.iter_mut().zip(g).zip(xd) {
                        let u = GELU_C * (v + GELU_A * v * v * v);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                        *s += gi * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if needs(*x) {
                    let yd = node.value.data();
                    let acc = slot(grads, *x, g.len());
                    for ((s, gi), y) in acc.iter_mut().zip(g).zip(yd) {
                        *s += gi * y * (1.0 - y);
                    }
                }
            }
            Op::LayerNorm { x, inv_std } => {
                if needs(*x) {
                    let k = node.value.cols();
                    let yd = node.value.data();
                    let acc = slot(grads, *x, g.len());
                    for (r, is) in inv_std.iter().enumerate() {
                        let gy = &g[r * k..(r + 1) * k];
                        let y = &yd[r * k..(r + 1) * k];
                        let mean_g = gy.iter().sum::<f64>() / k as f64;
                        let mean_gy = gy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / k as f64;
                        for j in 0..k {
                            acc[r * k + j] += is * (gy[j] - mean_g - y[j] * mean_gy);
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if needs(*x) {
                    let acc = slot(grads, *x, g.len());
                    for ((s, gi), m) in acc.iter_mut().zip(g).zip(mask) {
                        *s += gi * m;
                    }
                }
            }
            Op::MaskedSoftmax(x) => {
                if needs(*x) {
                    let k = node.value.cols();
                    let yd = node.value.data();
                    let acc = slot(grads, *x, g.len());
                    for ((arow, grow), y) in acc.chunks_mut(k).zip(g.chunks(k)).zip(yd.chunks(k)) {
                        let dot: f64 = grow.iter().zip(y).map(|(a, b)| a * b).sum();
                        for j in 0..k {
                            arow[j] += y[j] * (grow[j] - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(x) => {
                if needs(*x) {
                    let k = node.value.cols();
                    let yd = node.value.data();
                    let acc = slot(grads, *x, g.len());
                    for ((arow, grow), y) in acc.chunks_mut(k).zip(g.chunks(k)).zip(yd.chunks(k)) {
                        let gsum: f64 = grow.iter().sum();
                        for j in 0..k {
                            arow[j] += grow[j] - y[j].exp() * gsum;
                        }
                    }
                }
            }
            Op::Nll { x, targets, mask } => {
                if needs(*x) {
                    let k = val(*x).cols();
                    let acc = slot(grads, *x, val(*x).numel());
                    for (i, (&t, &m)) in targets.iter().zip(mask).enumerate() {
                        if m {
                            acc[i * k + t] -= g[0];
                        }
                    }
                }
            }
            Op::BceWithLogits { x, target } => {
                if needs(*x) {
                    let z = val(*x).item();
                    let acc = slot(grads, *x, 1);
                    acc[0] += g[0] * (sigmoid(z) - target);
                }
            }
            Op::Sum(x) => {
                if needs(*x) {
                    let acc = slot(grads, *x, val(*x).numel());
                    acc.iter_mut().for_each(|s| *s += g[0]);
                }
            }
        }
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

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (s, x) in acc.iter_mut().zip(g) {
        *s += x;
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
fn kernel_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`
fn kernel_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
fn kernel_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}
