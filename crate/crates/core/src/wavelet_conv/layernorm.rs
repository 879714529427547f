//! Layer normalization along the temporal axis.
//!
//! Each row of a `[B x R x T]` tensor is standardised over time, then the
//! affine map `(gamma[r], beta[r])` of its row index `r` (shared across `B`)
//! is applied.

use crate::error::{CssmError, Result};

pub const DEFAULT_LN_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalLayerNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: f64,
}

impl TemporalLayerNormParams {
    pub fn identity(rows: usize) -> Self {
        TemporalLayerNormParams {
            gamma: vec![1.0; rows],
            beta: vec![0.0; rows],
            eps: DEFAULT_LN_EPS,
        }
    }
}

/// Per-row `(mean, 1 / sqrt(var + eps))`, population variance.
pub(crate) fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, (var + eps).sqrt().recip())
}

/// Normalises `x` (`n_rows * t` values) in place into `out`; returns per-row stats.
pub(crate) fn layernorm_forward(
    x: &[f64],
    t: usize,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
    out: &mut [f64],
) -> Vec<(f64, f64)> {
    let r_len = gamma.len();
    x.chunks_exact(t)
        .zip(out.chunks_exact_mut(t))
        .enumerate()
        .map(|(i, (row, o))| {
            let (mean, inv) = row_stats(row, eps);
            let r = i % r_len;
            for (ov, &xv) in o.iter_mut().zip(row) {
                *ov = gamma[r] * (xv - mean) * inv + beta[r];
            }
            (mean, inv)
        })
        .collect()
}

/// Standalone temporal LayerNorm of `z` = `[R x T]` (or `[B x R x T]` flattened).
pub fn temporal_layernorm(z: &[f64], t: usize, p: &TemporalLayerNormParams) -> Result<Vec<f64>> {
    if t < 2 || z.len() % t != 0 || (z.len() / t) % p.gamma.len() != 0 {
        return Err(CssmError::dim(format!(
            "LayerNorm input of {} values with T = {t} and {} rows of parameters",
            z.len(),
            p.gamma.len()
        )));
    }
    if p.gamma.len() != p.beta.len() || !(p.eps > 0.0) {
        return Err(CssmError::config(
            "LayerNorm needs matching gamma/beta and eps > 0",
        ));
    }
    let mut out = vec![0.0; z.len()];
    layernorm_forward(z, t, &p.gamma, &p.beta, p.eps, &mut out);
    Ok(out)
}
