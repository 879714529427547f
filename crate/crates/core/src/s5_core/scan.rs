//! Parallel-prefix evaluation of `h_t = lambda_bar * h_(t-1) + B_bar u_t`
//! and the readout `y_t = Re(C h_t) + D * u_t`, plus the adjoint pass.

use num_complex::Complex64;

use super::params::DiscreteS5;

/// Inclusive scan of `(a_t, b_t)` under `(a2, b2) o (a1, b1) = (a2 a1, a2 b1 + b2)`,
/// elementwise over `q` lanes. On return `b[t]` holds `h_t` with `h_(-1) = 0`.
///
/// Work-efficient up-sweep/down-sweep tree; the combine order does not
/// depend on the thread count.
pub fn brent_kung_scan(a: &mut [Complex64], b: &mut [Complex64], q: usize) {
    assert_eq!(a.len(), b.len());
    assert!(q > 0 && a.len() % q == 0);
    let t_len = a.len() / q;
    if t_len < 2 {
        return;
    }
    let combine = |a: &mut [Complex64], b: &mut [Complex64], i: usize, j: usize| {
        // e[i] = e[i] o e[j], j < i
        let (a_lo, a_hi) = a.split_at_mut(i * q);
        let (b_lo, b_hi) = b.split_at_mut(i * q);
        let (aj, bj) = (&a_lo[j * q..(j + 1) * q], &b_lo[j * q..(j + 1) * q]);
        for k in 0..q {
            let ai = a_hi[k];
            b_hi[k] += ai * bj[k];
            a_hi[k] = ai * aj[k];
        }
    };
    let mut d = 1;
    while 2 * d <= t_len {
        let mut i = 2 * d - 1;
        while i < t_len {
            combine(a, b, i, i - d);
            i += 2 * d;
        }
        d *= 2;
    }
    while d >= 1 {
        let mut i = 3 * d - 1;
        while i < t_len {
            combine(a, b, i, i - d);
            i += 2 * d;
        }
        d /= 2;
    }
}

/// Latent states `[T x Q]` for input `u` = `[P x T]`.
pub fn ssm_states(sys: &DiscreteS5, u: &[f64], t_len: usize) -> Vec<Complex64> {
    let (q, p) = (sys.q, sys.p);
    assert_eq!(u.len(), p * t_len);
    let mut bu = vec![Complex64::new(0.0, 0.0); t_len * q];
    let mut ut = vec![0.0; p];
    for t in 0..t_len {
        for (pi, v) in ut.iter_mut().enumerate() {
            *v = u[pi * t_len + t];
        }
        let row = &mut bu[t * q..(t + 1) * q];
        for (qi, h) in row.iter_mut().enumerate() {
            let brow = &sys.b_bar[qi * p..(qi + 1) * p];
            let (mut re, mut im) = (0.0, 0.0);
            for (b, &x) in brow.iter().zip(&ut) {
                re += b.re * x;
                im += b.im * x;
            }
            *h = Complex64::new(re, im);
        }
    }
    let mut a: Vec<Complex64> = (0..t_len)
        .flat_map(|_| sys.lambda_bar.iter().copied())
        .collect();
    brent_kung_scan(&mut a, &mut bu, q);
    bu
}

/// `y` = `[P x T]` from states `[T x Q]`.
pub fn ssm_readout(sys: &DiscreteS5, h: &[Complex64], u: &[f64], t_len: usize) -> Vec<f64> {
    let (q, p) = (sys.q, sys.p);
    let mut y = vec![0.0; p * t_len];
    for t in 0..t_len {
        let ht = &h[t * q..(t + 1) * q];
        for pi in 0..p {
            let crow = &sys.c[pi * q..(pi + 1) * q];
            let mut acc = 0.0;
            for (c, hv) in crow.iter().zip(ht) {
                acc += c.re * hv.re - c.im * hv.im;
            }
            y[pi * t_len + t] = acc + sys.d[pi] * u[pi * t_len + t];
        }
    }
    y
}

/// Applies the discretized system to `u` = `[P x T]`; returns `[P x T]`.
pub fn ssm_apply(sys: &DiscreteS5, u: &[f64], t_len: usize) -> Vec<f64> {
    let h = ssm_states(sys, u, t_len);
    ssm_readout(sys, &h, u, t_len)
}

/// Gradients of a loss w.r.t. the discrete system and its input.
///
/// Complex entries hold `dL/d(re) + i dL/d(im)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGrads {
    pub lambda_bar: Vec<Complex64>,
    pub b_bar: Vec<Complex64>,
    pub c: Vec<Complex64>,
    pub d: Vec<f64>,
}

impl DiscreteGrads {
    pub fn zeros(q: usize, p: usize) -> Self {
        let z = Complex64::new(0.0, 0.0);
        DiscreteGrads {
            lambda_bar: vec![z; q],
            b_bar: vec![z; q * p],
            c: vec![z; p * q],
            d: vec![0.0; p],
        }
    }
}

/// Accumulates parameter gradients into `acc` and returns `dL/du` (`[P x T]`).
pub fn ssm_backward(
    sys: &DiscreteS5,
    u: &[f64],
    h: &[Complex64],
    gy: &[f64],
    t_len: usize,
    acc: &mut DiscreteGrads,
) -> Vec<f64> {
    let (q, p) = (sys.q, sys.p);
    let mut gu = vec![0.0; p * t_len];
    let mut gh = vec![Complex64::new(0.0, 0.0); q];
    let mut gy_t = vec![0.0; p];
    for t in (0..t_len).rev() {
        for (pi, v) in gy_t.iter_mut().enumerate() {
            *v = gy[pi * t_len + t];
        }
        let ht = &h[t * q..(t + 1) * q];
        for pi in 0..p {
            let g = gy_t[pi];
            acc.d[pi] += g * u[pi * t_len + t];
            gu[pi * t_len + t] += sys.d[pi] * g;
            if g == 0.0 {
                continue;
            }
            let crow = &sys.c[pi * q..(pi + 1) * q];
            let grow = &mut acc.c[pi * q..(pi + 1) * q];
            for qi in 0..q {
                grow[qi] += ht[qi].conj() * g;
            }
            for qi in 0..q {
                gh[qi] += crow[qi].conj() * g;
            }
        }
        // gh now holds dL/dh_t in full
        for qi in 0..q {
            let g = gh[qi];
            if t > 0 {
                acc.lambda_bar[qi] += g * h[(t - 1) * q + qi].conj();
            }
            let brow = &sys.b_bar[qi * p..(qi + 1) * p];
            let gbrow = &mut acc.b_bar[qi * p..(qi + 1) * p];
            for pi in 0..p {
                let x = u[pi * t_len + t];
                gbrow[pi] += g * x;
                gu[pi * t_len + t] += brow[pi].re * g.re + brow[pi].im * g.im;
            }
            gh[qi] = sys.lambda_bar[qi].conj() * g;
        }
    }
    gu
}
