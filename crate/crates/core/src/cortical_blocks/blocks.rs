//! Standalone evaluation of each stage, without recording gradients.

use super::params::{BlockParams, FfnParams, HeadParams};
use crate::error::{CssmError, Result};
use crate::s5_core::ssm_apply;
use crate::tensor::Tensor;
use crate::training::tape::{dense, gelu, pointwise_linear};
use crate::wavelet_conv::layernorm_forward;

/// FFN over the `P` axis of `[S x P x T]`, pointwise in time.
pub fn ffn_apply(x: &[f64], s: usize, p: usize, t: usize, ffn: &FfnParams) -> Vec<f64> {
    let h = ffn.b1.len();
    let hid: Vec<f64> = pointwise_linear(x, s, p, t, &ffn.w1, &ffn.b1)
        .into_iter()
        .map(gelu)
        .collect();
    pointwise_linear(&hid, s, h, t, &ffn.w2, &ffn.b2)
}

/// `FFN(SSM(LN(x))) + LN(x)` on each `[P x T]` slice of `[S x P x T]`.
pub fn residual_ssm_block(x: &Tensor, p: &BlockParams) -> Result<Tensor> {
    if x.shape().len() != 3 || x.dim(1) != p.width() {
        return Err(CssmError::dim(format!(
            "block of width {} applied to {:?}",
            p.width(),
            x.shape()
        )));
    }
    let (s, w, t) = (x.dim(0), x.dim(1), x.dim(2));
    let mut xn = vec![0.0; x.len()];
    layernorm_forward(x.data(), t, &p.ln.gamma, &p.ln.beta, p.ln.eps, &mut xn);
    let sys = p.ssm.discretize();
    let mut y = Vec::with_capacity(x.len());
    for si in 0..s {
        y.extend(ssm_apply(&sys, &xn[si * w * t..(si + 1) * w * t], t));
    }
    let mut out = ffn_apply(&y, s, w, t, &p.ffn);
    for (o, v) in out.iter_mut().zip(&xn) {
        *o += v;
    }
    Ok(Tensor::from_vec(x.shape(), out))
}

/// One frequency block on `[M x F x T]`: each frequency row is an `[M x T]`
/// slice and the block's variable axis is the electrode axis.
pub fn frequency_ssm_block(u: &Tensor, p: &BlockParams) -> Result<Tensor> {
    check_cube(u)?;
    Ok(residual_ssm_block(&u.swap_leading(), p)?.swap_leading())
}

/// One channel block on `[M x F x T]`: each electrode is an `[F x T]` slice.
pub fn channel_ssm_block(v: &Tensor, p: &BlockParams) -> Result<Tensor> {
    check_cube(v)?;
    residual_ssm_block(v, p)
}

fn check_cube(x: &Tensor) -> Result<()> {
    if x.shape().len() != 3 {
        return Err(CssmError::dim(format!(
            "expected [M x F x T], got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Temporal mean of every row of `[.. x T]`.
pub fn mean_over_time(x: &Tensor) -> Vec<f64> {
    let t = *x.shape().last().expect("non-scalar");
    x.data()
        .chunks_exact(t)
        .map(|r| r.iter().sum::<f64>() / t as f64)
        .collect()
}

/// Head logits from the pooled branch outputs (each `[M x F x T]`).
pub fn fusion_logits(
    u: Option<&Tensor>,
    v: Option<&Tensor>,
    head: &HeadParams,
) -> Result<Vec<f64>> {
    let mut z = Vec::new();
    for x in [u, v].into_iter().flatten() {
        z.extend(mean_over_time(x));
    }
    if z.is_empty() {
        return Err(CssmError::config(
            "fusion head needs at least one branch output",
        ));
    }
    let n_layers = head.layers.len();
    for (i, (w, b)) in head.layers.iter().enumerate() {
        if w.len() != b.len() * z.len() {
            return Err(CssmError::dim(format!(
                "head layer {i}: {} weights for {} -> {}",
                w.len(),
                z.len(),
                b.len()
            )));
        }
        z = dense(&z, w, b);
        if i + 1 < n_layers {
            z = z.into_iter().map(gelu).collect();
        }
    }
    Ok(z)
}

/// Class probabilities: `softmax(head([mean_t U; mean_t V]))`.
pub fn fusion_head(u: Option<&Tensor>, v: Option<&Tensor>, head: &HeadParams) -> Result<Vec<f64>> {
    Ok(softmax(&fusion_logits(u, v, head)?))
}

/// `[M x F x T]` with `y[m,f,t] = scale[f] x[m,t] + shift[f]`.
pub fn lift_forward(x: &[f64], m: usize, t: usize, scale: &[f64], shift: &[f64]) -> Tensor {
    let f = scale.len();
    let mut y = Vec::with_capacity(m * f * t);
    for mi in 0..m {
        let row = &x[mi * t..(mi + 1) * t];
        for fi in 0..f {
            y.extend(row.iter().map(|&v| scale[fi] * v + shift[fi]));
        }
    }
    Tensor::from_vec(&[m, f, t], y)
}
