//! Wilcoxon signed-rank test for paired fold-level scores.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CssmError, Result};

/// Largest number of non-zero differences handled by exact enumeration.
pub const EXACT_MAX_N: usize = 12;
/// Smallest number of non-zero differences accepted by the normal approximation.
pub const NORMAL_MIN_N: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    /// Exact for up to [`EXACT_MAX_N`] non-zero differences, normal above.
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences `a - b`.
    pub w_plus: f64,
    pub w_minus: f64,
    /// Non-zero differences used.
    pub n: usize,
    /// Two-sided.
    pub p_value: f64,
    pub exact: bool,
    /// Every difference was zero.
    pub degenerate: bool,
}

/// Average ranks of `|d|`, doubled so they are integers.
fn doubled_ranks(abs: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..abs.len()).collect();
    idx.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut r2 = vec![0u64; abs.len()];
    let mut ties = Vec::new();
    let mut s = 0;
    while s < idx.len() {
        let mut e = s + 1;
        while e < idx.len() && abs[idx[e]] == abs[idx[s]] {
            e += 1;
        }
        // ranks s+1..=e, doubled mean = s + 1 + e
        for &i in &idx[s..e] {
            r2[i] = (s + 1 + e) as u64;
        }
        if e - s > 1 {
            ties.push(e - s);
        }
        s = e;
    }
    (r2, ties)
}

/// Number of sign assignments reaching each doubled positive-rank sum.
fn null_counts(r2: &[u64]) -> Vec<u64> {
    let total: u64 = r2.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    for &r in r2 {
        for s in (r as usize..=total as usize).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    counts
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    wilcoxon_signed_rank_with(a, b, WilcoxonMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(
    a: &[f64],
    b: &[f64],
    method: WilcoxonMethod,
) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(CssmError::dim(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(CssmError::Numerical("non-finite paired difference".into()));
    }
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            w_plus: 0.0,
            w_minus: 0.0,
            n: 0,
            p_value: 1.0,
            exact: true,
            degenerate: true,
        });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (r2, ties) = doubled_ranks(&abs);
    let total2: u64 = r2.iter().sum();
    let wp2: u64 = d
        .iter()
        .zip(&r2)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let exact = match method {
        WilcoxonMethod::Auto => n <= EXACT_MAX_N,
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Normal => false,
    };
    let p_value = if exact {
        if n > 30 {
            return Err(CssmError::config(format!(
                "exact enumeration for {n} differences is too large"
            )));
        }
        let counts = null_counts(&r2);
        // |2W - total| in doubled units, compared as integers
        let obs = (2 * wp2 as i64 - total2 as i64).abs();
        let hit: u64 = counts
            .iter()
            .enumerate()
            .filter(|(s, _)| (2 * *s as i64 - total2 as i64).abs() >= obs)
            .map(|(_, c)| c)
            .sum();
        hit as f64 / (1u64 << n) as f64
    } else {
        if n < NORMAL_MIN_N {
            return Err(CssmError::config(format!(
                "normal approximation needs at least {NORMAL_MIN_N} non-zero differences, got {n}"
            )));
        }
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let w = wp2 as f64 / 2.0;
        let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * normal.sf(z)).min(1.0)
    };
    Ok(WilcoxonResult {
        w_plus: wp2 as f64 / 2.0,
        w_minus: (total2 - wp2) as f64 / 2.0,
        n,
        p_value,
        exact,
        degenerate: false,
    })
}
