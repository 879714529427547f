//! Learned 1-D convolution branch ("same" zero padding, stride 1, no bias).

use crate::error::{CssmError, Result};

/// Kernel length `round(fs / 2)` samples.
pub fn conv_kernel_len(fs: f64) -> usize {
    ((fs / 2.0).round() as usize).max(1)
}

/// Left padding for "same" alignment; a delta at this index is the identity.
pub fn same_pad(k: usize) -> usize {
    (k - 1) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBranchParams {
    /// `[F x K]`, row-major.
    pub kernels: Vec<f64>,
    pub n_filters: usize,
    pub kernel_len: usize,
}

impl ConvBranchParams {
    pub fn new(kernels: Vec<f64>, n_filters: usize, kernel_len: usize) -> Result<Self> {
        if kernels.len() != n_filters * kernel_len || kernel_len == 0 {
            return Err(CssmError::dim(format!(
                "{} kernel values for {n_filters}x{kernel_len}",
                kernels.len()
            )));
        }
        Ok(ConvBranchParams {
            kernels,
            n_filters,
            kernel_len,
        })
    }
}

/// Accumulates `out[f, t] += sum_k w[f, k] x[t + k - pad]` for one input row.
pub(crate) fn correlate_same(
    x: &[f64],
    w: &[f64],
    n_filters: usize,
    k_len: usize,
    out: &mut [f64],
) {
    let t_len = x.len();
    let pad = same_pad(k_len);
    for f in 0..n_filters {
        let wf = &w[f * k_len..(f + 1) * k_len];
        let of = &mut out[f * t_len..(f + 1) * t_len];
        for (k, &wk) in wf.iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            // t + k - pad in [0, T)
            let t_lo = pad.saturating_sub(k);
            let t_hi = (t_len + pad).saturating_sub(k).min(t_len);
            if t_lo >= t_hi {
                continue;
            }
            let shift = k as isize - pad as isize;
            let xs = &x[(t_lo as isize + shift) as usize..(t_hi as isize + shift) as usize];
            for (o, &xv) in of[t_lo..t_hi].iter_mut().zip(xs) {
                *o += wk * xv;
            }
        }
    }
}

/// Gradient of [`correlate_same`] w.r.t. the kernels: `gw[f, k] += sum_t g[f, t] x[t + k - pad]`.
pub(crate) fn correlate_same_grad_w(
    x: &[f64],
    g: &[f64],
    n_filters: usize,
    k_len: usize,
    gw: &mut [f64],
) {
    let t_len = x.len();
    let pad = same_pad(k_len);
    for f in 0..n_filters {
        let gf = &g[f * t_len..(f + 1) * t_len];
        for k in 0..k_len {
            let t_lo = pad.saturating_sub(k);
            let t_hi = (t_len + pad).saturating_sub(k).min(t_len);
            if t_lo >= t_hi {
                continue;
            }
            let shift = k as isize - pad as isize;
            let xs = &x[(t_lo as isize + shift) as usize..(t_hi as isize + shift) as usize];
            let dot: f64 = gf[t_lo..t_hi].iter().zip(xs).map(|(a, b)| a * b).sum();
            gw[f * k_len + k] += dot;
        }
    }
}

/// Gradient w.r.t. the input row: `gx[t + k - pad] += w[f, k] g[f, t]`.
pub(crate) fn correlate_same_grad_x(
    g: &[f64],
    w: &[f64],
    n_filters: usize,
    k_len: usize,
    gx: &mut [f64],
) {
    let t_len = gx.len();
    let pad = same_pad(k_len);
    for f in 0..n_filters {
        let gf = &g[f * t_len..(f + 1) * t_len];
        for k in 0..k_len {
            let wk = w[f * k_len + k];
            let t_lo = pad.saturating_sub(k);
            let t_hi = (t_len + pad).saturating_sub(k).min(t_len);
            if t_lo >= t_hi {
                continue;
            }
            let shift = k as isize - pad as isize;
            let xs = &mut gx[(t_lo as isize + shift) as usize..(t_hi as isize + shift) as usize];
            for (o, &gv) in xs.iter_mut().zip(&gf[t_lo..t_hi]) {
                *o += wk * gv;
            }
        }
    }
}

/// `[F x T]` output for one input row.
pub fn conv1d_branch(x: &[f64], p: &ConvBranchParams) -> Result<Vec<f64>> {
    if p.kernel_len > x.len() {
        return Err(CssmError::dim(format!(
            "kernel length {} exceeds signal length {}",
            p.kernel_len,
            x.len()
        )));
    }
    let mut out = vec![0.0; p.n_filters * x.len()];
    correlate_same(x, &p.kernels, p.n_filters, p.kernel_len, &mut out);
    Ok(out)
}
