//! Forward kernels over plain tensors. The tape records these and supplies
//! the matching adjoints.

use alloc::vec;
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use super::kernels;
use super::Tensor;
use crate::error::{bail, Result};

fn matrix_dims(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        [c] => Ok((1, *c)),
        s => bail!(Dimension, "{} must be a matrix, got shape {:?}", what, s),
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = matrix_dims(a, "matmul lhs")?;
    let (k2, n) = matrix_dims(b, "matmul rhs")?;
    if k != k2 {
        bail!(
            Dimension,
            "matmul inner dimensions differ: {:?} · {:?}",
            a.shape(),
            b.shape()
        );
    }
    let mut out = vec![0.0; m * n];
    kernels::gemm_nn(m, k, n, a.values(), b.values(), &mut out);
    Tensor::new(&[m, n], out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_bt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = matrix_dims(a, "matmul lhs")?;
    let (n, k2) = matrix_dims(b, "matmul rhs (transposed)")?;
    if k != k2 {
        bail!(
            Dimension,
            "matmul inner dimensions differ: {:?} · {:?}ᵀ",
            a.shape(),
            b.shape()
        );
    }
    let mut out = vec![0.0; m * n];
    kernels::gemm_nt(m, k, n, a.values(), b.values(), &mut out);
    Tensor::new(&[m, n], out)
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (r, c) = matrix_dims(a, "transpose input")?;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a.values()[i * c + j];
        }
    }
    Tensor::new(&[c, r], out)
}

/// Row-wise softmax over the last axis, stabilized by max subtraction.
///
/// With `causal`, entry `(i, j)` of an `m × n` score block is kept only when
/// `j <= i + (n - m)`; masked entries come out exactly zero.
pub fn softmax(x: &Tensor, causal: bool) -> Result<Tensor> {
    let n = x.cols();
    if n == 0 || x.shape().is_empty() {
        bail!(Dimension, "softmax over an empty axis (shape {:?})", x.shape());
    }
    let m = x.rows();
    if causal && m > n {
        bail!(
            Dimension,
            "causal mask needs at least as many keys as queries, got {:?}",
            x.shape()
        );
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let limit = if causal { i + (n - m) + 1 } else { n };
        let row = &x.values()[i * n..i * n + limit];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dst = &mut out[i * n..i * n + limit];
        let mut total = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            total += *d;
        }
        dst.iter_mut().for_each(|d| *d /= total);
    }
    Tensor::new(x.shape(), out)
}

/// Cached statistics of a layer-norm forward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(
    x: &Tensor,
    gain: &Tensor,
    bias: &Tensor,
    eps: f64,
) -> Result<(Tensor, LayerNormCache)> {
    let d = x.cols();
    if d < 2 {
        bail!(Dimension, "layer norm needs at least 2 features, got {}", d);
    }
    if gain.numel() != d || bias.numel() != d {
        bail!(
            Dimension,
            "layer norm affine params {:?}/{:?} do not match feature size {}",
            gain.shape(),
            bias.shape(),
            d
        );
    }
    let rows = x.rows();
    let mut out = vec![0.0; rows * d];
    let mut normalized = vec![0.0; rows * d];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + eps).sqrt();
        inv_std[r] = s;
        for j in 0..d {
            let z = (row[j] - mean) * s;
            normalized[r * d + j] = z;
            out[r * d + j] = z * gain.values()[j] + bias.values()[j];
        }
    }
    Ok((
        Tensor::new(x.shape(), out)?,
        LayerNormCache { normalized, inv_std },
    ))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax probabilities and the number of scored positions of a
/// pad-masked cross-entropy.
#[derive(Debug, Clone)]
pub struct CrossEntropyCache {
    pub probs: Vec<f64>,
    pub count: usize,
}

/// Mean of `-log softmax(logits)[target]` over positions whose target is not `pad`.
pub fn cross_entropy(
    logits: &Tensor,
    targets: &[usize],
    pad: Option<usize>,
) -> Result<(f64, CrossEntropyCache)> {
    let (t, v) = matrix_dims(logits, "cross-entropy logits")?;
    if targets.len() != t {
        bail!(
            Dimension,
            "{} targets for {} logit rows",
            targets.len(),
            t
        );
    }
    let mut probs = vec![0.0; t * v];
    let mut total = 0.0;
    let mut count = 0;
    for (i, &y) in targets.iter().enumerate() {
        if Some(y) == pad {
            continue;
        }
        if y >= v {
            bail!(Index, "target id {} outside vocabulary of size {}", y, v);
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        for j in 0..v {
            probs[i * v + j] = (row[j] - lse).exp();
        }
        total += lse - row[y];
        count += 1;
    }
    if count == 0 {
        bail!(DegenerateInput, "every target position is padding");
    }
    Ok((total / count as f64, CrossEntropyCache { probs, count }))
}

/// `-½ Σ (1 + 2 log σ − μ² − σ²)`, the KL divergence of `N(μ, σ²)` from `N(0, 1)`.
pub fn kl_standard_normal(mu: &[f64], log_sigma: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(log_sigma)
        .map(|(m, ls)| 1.0 + 2.0 * ls - m * m - (2.0 * ls).exp())
        .sum::<f64>()
}
