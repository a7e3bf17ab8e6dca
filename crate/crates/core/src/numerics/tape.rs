//! Dynamic reverse-mode tape.
//!
//! Every forward computation of the model is recorded as a list of nodes in
//! creation order; [`Tape::backward`] walks that list in reverse and
//! accumulates adjoints, returning the parameter gradients. Parameters are
//! borrowed from their [`ParamStore`], never copied. A tape lives for one
//! forward/backward pass.

use alloc::borrow::Cow;
use alloc::vec;
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use super::ops::{self, CrossEntropyCache, LayerNormCache};
use super::{kernels, ParamId, ParamStore, Tensor};
use crate::error::{bail, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulConst(Var, Vec<f64>),
    Scale(Var, f64),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        cache: LayerNormCache,
    },
    Gelu(Var),
    Exp(Var),
    GatedMix {
        a: Var,
        b: Var,
        gate_logit: Var,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        pad: Option<usize>,
        cache: CrossEntropyCache,
    },
    KlStandardNormal {
        mu: Var,
        log_sigma: Var,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node<'s> {
    value: Cow<'s, Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Parameter gradients produced by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients(pub Vec<(ParamId, Vec<f64>)>);

#[derive(Debug, Default)]
pub struct Tape<'s> {
    nodes: Vec<Node<'s>>,
    params: Vec<Option<Var>>,
}

impl<'s> Tape<'s> {
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
        &*self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.values()[0]
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.push_cow(Cow::Owned(value), op, needs_grad)
    }

    fn push_cow(&mut self, value: Cow<'s, Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn constant_ref(&mut self, value: &'s Tensor) -> Var {
        self.push_cow(Cow::Borrowed(value), Op::Constant, false)
    }

    /// Records a parameter; repeated calls return the same node so that
    /// gradients from every use accumulate on one leaf.
    pub fn param(&mut self, store: &'s ParamStore, id: ParamId) -> Var {
        if self.params.len() <= id.0 {
            self.params.resize(id.0 + 1, None);
        }
        if let Some(v) = self.params[id.0] {
            return v;
        }
        let t = store.get(id);
        let v = self.push_cow(Cow::Borrowed(t), Op::Param(id), t.requires_grad());
        self.params[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul_bt(self.value(a), self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMulBt(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            bail!(Dimension, "add of {:?} and {:?}", x.shape(), y.shape());
        }
        let vals = x.values().iter().zip(y.values()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape(), vals)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    /// Adds a length-`n` vector to every row of an `m × n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        let n = x.cols();
        if r.numel() != n {
            bail!(Dimension, "row broadcast of {:?} onto {:?}", r.shape(), x.shape());
        }
        let vals = x
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v + r.values()[i % n])
            .collect();
        let out = Tensor::new(x.shape(), vals)?;
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, Op::AddRow(a, row), ng))
    }

    /// Multiplies every row of an `m × n` matrix elementwise by a length-`n` vector.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        let n = x.cols();
        if r.numel() != n {
            bail!(Dimension, "row product of {:?} with {:?}", r.shape(), x.shape());
        }
        let vals = x
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * r.values()[i % n])
            .collect();
        let out = Tensor::new(x.shape(), vals)?;
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, Op::MulRow(a, row), ng))
    }

    /// Elementwise product with a constant of the same size (dropout masks, fixed noise).
    pub fn mul_const(&mut self, a: Var, factor: Vec<f64>) -> Result<Var> {
        let x = self.value(a);
        if factor.len() != x.numel() {
            bail!(
                Dimension,
                "constant factor of length {} for {:?}",
                factor.len(),
                x.shape()
            );
        }
        let vals = x.values().iter().zip(&factor).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape(), vals)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::MulConst(a, factor), ng))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let x = self.value(a);
        let vals = x.values().iter().map(|v| v * factor).collect();
        let out = Tensor::new(x.shape(), vals).expect("same shape");
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, factor), ng)
    }

    pub fn softmax(&mut self, a: Var, causal: bool) -> Result<Var> {
        let out = ops::softmax(self.value(a), causal)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Softmax(a), ng))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (out, cache) = ops::layer_norm(self.value(x), self.value(gain), self.value(bias), eps)?;
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                cache,
            },
            ng,
        ))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let vals = x.values().iter().map(|&v| ops::gelu(v)).collect();
        let out = Tensor::new(x.shape(), vals).expect("same shape");
        let ng = self.ng(a);
        self.push(out, Op::Gelu(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let vals = x.values().iter().map(|v| v.exp()).collect();
        let out = Tensor::new(x.shape(), vals).expect("same shape");
        let ng = self.ng(a);
        self.push(out, Op::Exp(a), ng)
    }

    /// `σ(g)·a + (1 − σ(g))·b` for a single-element gate logit `g`.
    pub fn gated_mix(&mut self, a: Var, b: Var, gate_logit: Var) -> Result<Var> {
        let (x, y, g) = (self.value(a), self.value(b), self.value(gate_logit));
        if x.shape() != y.shape() || g.numel() != 1 {
            bail!(
                Dimension,
                "gated mix of {:?} and {:?} with gate {:?}",
                x.shape(),
                y.shape(),
                g.shape()
            );
        }
        let s = ops::sigmoid(g.values()[0]);
        let vals = x
            .values()
            .iter()
            .zip(y.values())
            .map(|(p, q)| s * p + (1.0 - s) * q)
            .collect();
        let out = Tensor::new(x.shape(), vals)?;
        let ng = self.ng(a) || self.ng(b) || self.ng(gate_logit);
        Ok(self.push(out, Op::GatedMix { a, b, gate_logit }, ng))
    }

    /// Selects rows of `table` (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, d) = (t.rows(), t.cols());
        let mut vals = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                bail!(Index, "row {} requested from a table of {} rows", id, rows);
            }
            vals.extend_from_slice(t.row(id));
        }
        let out = Tensor::new(&[ids.len(), d], vals)?;
        let ng = self.ng(table);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        if start + len > n {
            bail!(Dimension, "columns {}..{} of {:?}", start, start + len, x.shape());
        }
        let mut vals = Vec::with_capacity(m * len);
        for i in 0..m {
            vals.extend_from_slice(&x.row(i)[start..start + len]);
        }
        let out = Tensor::new(&[m, len], vals)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceCols { x: a, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            bail!(Dimension, "concatenation of zero tensors");
        };
        let m = self.value(first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != m) {
            bail!(Dimension, "column concatenation with differing row counts");
        }
        let n: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut vals = Vec::with_capacity(m * n);
        for i in 0..m {
            for &p in parts {
                vals.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::new(&[m, n], vals)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            bail!(Dimension, "concatenation of zero tensors");
        };
        let n = self.value(first).cols();
        if parts.iter().any(|&p| self.value(p).cols() != n) {
            bail!(Dimension, "row concatenation with differing column counts");
        }
        let mut vals = Vec::new();
        for &p in parts {
            vals.extend_from_slice(self.value(p).values());
        }
        let m = vals.len() / n.max(1);
        let out = Tensor::new(&[m, n], vals)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Pad-masked mean token cross-entropy; see [`ops::cross_entropy`].
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], pad: Option<usize>) -> Result<Var> {
        let (loss, cache) = ops::cross_entropy(self.value(logits), targets, pad)?;
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                pad,
                cache,
            },
            ng,
        ))
    }

    /// KL divergence of `N(μ, σ²)` from the standard normal, with σ given as log σ.
    pub fn kl_standard_normal(&mut self, mu: Var, log_sigma: Var) -> Result<Var> {
        let (m, s) = (self.value(mu), self.value(log_sigma));
        if m.numel() != s.numel() {
            bail!(Dimension, "KL of μ {:?} with log σ {:?}", m.shape(), s.shape());
        }
        let kl = ops::kl_standard_normal(m.values(), s.values());
        let ng = self.ng(mu) || self.ng(log_sigma);
        Ok(self.push(Tensor::scalar(kl), Op::KlStandardNormal { mu, log_sigma }, ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).values().iter().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(total), Op::Sum(a), ng)
    }

    /// Reverse sweep from a scalar `loss`. The tape is consumed.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            bail!(
                Contract,
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            );
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Param(id) = node.op {
                out.0.push((id, g));
                continue;
            }
            propagate(&nodes, &mut grads, node, &g);
        }
        Ok(out)
    }
}

fn slot<'g>(
    nodes: &[Node],
    grads: &'g mut [Option<Vec<f64>>],
    v: Var,
) -> Option<&'g mut Vec<f64>> {
    if !nodes[v.0].needs_grad {
        return None;
    }
    let n = nodes[v.0].value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f64>>], node: &Node, g: &[f64]) {
    let val = |v: Var| &*nodes[v.0].value;
    match &node.op {
        Op::Constant | Op::Param(_) => {}
        Op::MatMul(a, b) => {
            let (m, k) = (val(*a).rows(), val(*a).cols());
            let n = val(*b).cols();
            let (av, bv) = (val(*a).values(), val(*b).values());
            if let Some(ga) = slot(nodes, grads, *a) {
                kernels::gemm_nt(m, n, k, g, bv, ga);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                kernels::gemm_tn(m, k, n, av, g, gb);
            }
        }
        Op::MatMulBt(a, b) => {
            let (m, k) = (val(*a).rows(), val(*a).cols());
            let n = val(*b).rows();
            let (av, bv) = (val(*a).values(), val(*b).values());
            if let Some(ga) = slot(nodes, grads, *a) {
                kernels::gemm_nn(m, n, k, g, bv, ga);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                kernels::gemm_tn(m, n, k, g, av, gb);
            }
        }
        Op::Add(a, b) => {
            for v in [*a, *b] {
                if let Some(s) = slot(nodes, grads, v) {
                    s.iter_mut().zip(g).for_each(|(s, g)| *s += g);
                }
            }
        }
        Op::AddRow(a, row) => {
            if let Some(s) = slot(nodes, grads, *a) {
                s.iter_mut().zip(g).for_each(|(s, g)| *s += g);
            }
            let n = val(*a).cols();
            if let Some(s) = slot(nodes, grads, *row) {
                for (i, gv) in g.iter().enumerate() {
                    s[i % n] += gv;
                }
            }
        }
        Op::MulRow(a, row) => {
            let n = val(*a).cols();
            let (xv, rv) = (val(*a).values(), val(*row).values());
            if let Some(s) = slot(nodes, grads, *a) {
                for (i, gv) in g.iter().enumerate() {
                    s[i] += gv * rv[i % n];
                }
            }
            if let Some(s) = slot(nodes, grads, *row) {
                for (i, gv) in g.iter().enumerate() {
                    s[i % n] += gv * xv[i];
                }
            }
        }
        Op::MulConst(a, factor) => {
            if let Some(s) = slot(nodes, grads, *a) {
                for ((s, gv), f) in s.iter_mut().zip(g).zip(factor) {
                    *s += gv * f;
                }
            }
        }
        Op::Scale(a, factor) => {
            if let Some(s) = slot(nodes, grads, *a) {
                s.iter_mut().zip(g).for_each(|(s, g)| *s += g * factor);
            }
        }
        Op::Softmax(a) => {
            let y = node.value.values();
            let n = node.value.cols();
            if let Some(s) = slot(nodes, grads, *a) {
                for r in 0..node.value.rows() {
                    let ys = &y[r * n..(r + 1) * n];
                    let gs = &g[r * n..(r + 1) * n];
                    let inner = kernels::dot(ys, gs);
                    for j in 0..n {
                        s[r * n + j] += ys[j] * (gs[j] - inner);
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            cache,
        } => {
            let d = node.value.cols();
            let rows = node.value.rows();
            let gamma = val(*gain).values();
            if let Some(s) = slot(nodes, grads, *gain) {
                for i in 0..rows * d {
                    s[i % d] += g[i] * cache.normalized[i];
                }
            }
            if let Some(s) = slot(nodes, grads, *bias) {
                for i in 0..rows * d {
                    s[i % d] += g[i];
                }
            }
            if let Some(s) = slot(nodes, grads, *x) {
                let df = d as f64;
                for r in 0..rows {
                    let xh = &cache.normalized[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    for j in 0..d {
                        let dxh = gr[j] * gamma[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[j];
                    }
                    let scale = cache.inv_std[r] / df;
                    for j in 0..d {
                        let dxh = gr[j] * gamma[j];
                        s[r * d + j] += scale * (df * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                    }
                }
            }
        }
        Op::Gelu(a) => {
            let xv = val(*a).values();
            if let Some(s) = slot(nodes, grads, *a) {
                for i in 0..s.len() {
                    s[i] += g[i] * ops::gelu_grad(xv[i]);
                }
            }
        }
        Op::Exp(a) => {
            let y = node.value.values();
            if let Some(s) = slot(nodes, grads, *a) {
                for i in 0..s.len() {
                    s[i] += g[i] * y[i];
                }
            }
        }
        Op::GatedMix { a, b, gate_logit } => {
            let sg = ops::sigmoid(val(*gate_logit).values()[0]);
            if let Some(s) = slot(nodes, grads, *a) {
                s.iter_mut().zip(g).for_each(|(s, g)| *s += g * sg);
            }
            if let Some(s) = slot(nodes, grads, *b) {
                s.iter_mut().zip(g).for_each(|(s, g)| *s += g * (1.0 - sg));
            }
            let (av, bv) = (val(*a).values(), val(*b).values());
            if let Some(s) = slot(nodes, grads, *gate_logit) {
                let dmix: f64 = g
                    .iter()
                    .zip(av.iter().zip(bv))
                    .map(|(g, (p, q))| g * (p - q))
                    .sum();
                s[0] += dmix * sg * (1.0 - sg);
            }
        }
        Op::Gather { table, ids } => {
            let d = node.value.cols();
            if let Some(s) = slot(nodes, grads, *table) {
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        s[id * d + j] += g[r * d + j];
                    }
                }
            }
        }
        Op::SliceCols { x, start } => {
            let n = val(*x).cols();
            let len = node.value.cols();
            if let Some(s) = slot(nodes, grads, *x) {
                for r in 0..node.value.rows() {
                    for j in 0..len {
                        s[r * n + start + j] += g[r * len + j];
                    }
                }
            }
        }
        Op::ConcatCols(parts) => {
            let n = node.value.cols();
            let mut offset = 0;
            for &p in parts {
                let w = val(p).cols();
                if let Some(s) = slot(nodes, grads, p) {
                    for r in 0..node.value.rows() {
                        for j in 0..w {
                            s[r * w + j] += g[r * n + offset + j];
                        }
                    }
                }
                offset += w;
            }
        }
        Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = val(p).numel();
                if let Some(s) = slot(nodes, grads, p) {
                    s.iter_mut()
                        .zip(&g[offset..offset + len])
                        .for_each(|(s, g)| *s += g);
                }
                offset += len;
            }
        }
        Op::CrossEntropy {
            logits,
            targets,
            pad,
            cache,
        } => {
            let v = val(*logits).cols();
            let scale = g[0] / cache.count as f64;
            if let Some(s) = slot(nodes, grads, *logits) {
                for (i, &y) in targets.iter().enumerate() {
                    if Some(y) == *pad {
                        continue;
                    }
                    for j in 0..v {
                        let onehot = if j == y { 1.0 } else { 0.0 };
                        s[i * v + j] += scale * (cache.probs[i * v + j] - onehot);
                    }
                }
            }
        }
        Op::KlStandardNormal { mu, log_sigma } => {
            let (mv, lv) = (val(*mu).values(), val(*log_sigma).values());
            if let Some(s) = slot(nodes, grads, *mu) {
                for i in 0..s.len() {
                    s[i] += g[0] * mv[i];
                }
            }
            if let Some(s) = slot(nodes, grads, *log_sigma) {
                for i in 0..s.len() {
                    s[i] += g[0] * ((2.0 * lv[i]).exp() - 1.0);
                }
            }
        }
        Op::Sum(a) => {
            if let Some(s) = slot(nodes, grads, *a) {
                s.iter_mut().for_each(|s| *s += g[0]);
            }
        }
    }
}
