#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::numerics::{ops, Tensor};

/// `softmax((E·W_Q)(E·W_K)ᵀ/√d)` for an embedding table `E` of shape
/// `|V| × d_emb` and projections of shape `d_emb × d`.
pub fn alignment_matrix(emb: &Tensor, w_q: &Tensor, w_k: &Tensor) -> Result<Tensor> {
    if w_q.shape() != w_k.shape() {
        bail!(
            Dimension,
            "alignment projections differ: {:?} vs {:?}",
            w_q.shape(),
            w_k.shape()
        );
    }
    let q = ops::matmul(emb, w_q)?;
    let k = ops::matmul(emb, w_k)?;
    let mut s = ops::matmul_bt(&q, &k)?;
    let scale = 1.0 / (w_q.cols() as f64).sqrt();
    s.values_mut().iter_mut().for_each(|v| *v *= scale);
    ops::softmax(&s, false)
}

/// `raw·A + raw` with `A` from [`alignment_matrix`].
pub fn align_logits(raw: &Tensor, emb: &Tensor, w_q: &Tensor, w_k: &Tensor) -> Result<Tensor> {
    if raw.cols() != emb.rows() {
        bail!(
            Dimension,
            "logits over {} tokens with an embedding table of {} rows",
            raw.cols(),
            emb.rows()
        );
    }
    let a = alignment_matrix(emb, w_q, w_k)?;
    let mut out = ops::matmul(raw, &a)?;
    out.values_mut()
        .iter_mut()
        .zip(raw.values())
        .for_each(|(o, r)| *o += r);
    Ok(out)
}
