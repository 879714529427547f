//! Continuous-time parameters of a diagonal MIMO state-space layer.

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::hippo::{build_hippo_n, diagonalize};
use super::scan::DiscreteGrads;
use super::zoh::{zoh_discretize, zoh_jacobian};
use crate::error::{CssmError, Result};
use crate::rng::{seeded, stream::INIT, Rng};

/// Upper bound on `Re(lambda)` enforced after each optimizer step.
pub const LAMBDA_RE_MAX: f64 = -1e-4;
/// Range of `log(delta)` at initialization.
pub const LOG_DELTA_INIT: (f64, f64) = (-3.0 * std::f64::consts::LN_10, -std::f64::consts::LN_10);
/// Range `log(delta)` is kept in so `delta` stays positive and finite.
pub const LOG_DELTA_BOUNDS: (f64, f64) = (-18.0, 4.0);

/// All fields are real so optimizers treat them uniformly.
/// `b_*` are `[Q x P]` and `c_*` are `[P x Q]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct S5Params {
    pub q: usize,
    pub p: usize,
    pub lambda_re: Vec<f64>,
    pub lambda_im: Vec<f64>,
    pub b_re: Vec<f64>,
    pub b_im: Vec<f64>,
    pub c_re: Vec<f64>,
    pub c_im: Vec<f64>,
    pub d: Vec<f64>,
    pub log_delta: Vec<f64>,
}

/// The system after discretization; `c` is `[P x Q]`, `b_bar` is `[Q x P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteS5 {
    pub q: usize,
    pub p: usize,
    pub lambda_bar: Vec<Complex64>,
    pub b_bar: Vec<Complex64>,
    pub c: Vec<Complex64>,
    pub d: Vec<f64>,
}

fn zip_complex(re: &[f64], im: &[f64]) -> Vec<Complex64> {
    re.iter()
        .zip(im)
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect()
}

impl S5Params {
    pub fn lambda(&self) -> Vec<Complex64> {
        zip_complex(&self.lambda_re, &self.lambda_im)
    }

    pub fn b_tilde(&self) -> Vec<Complex64> {
        zip_complex(&self.b_re, &self.b_im)
    }

    pub fn c_tilde(&self) -> Vec<Complex64> {
        zip_complex(&self.c_re, &self.c_im)
    }

    pub fn delta(&self) -> Vec<f64> {
        self.log_delta.iter().map(|v| v.exp()).collect()
    }

    pub fn discretize(&self) -> DiscreteS5 {
        let (lambda_bar, b_bar) = zoh_discretize(&self.lambda(), &self.b_tilde(), &self.delta());
        DiscreteS5 {
            q: self.q,
            p: self.p,
            lambda_bar,
            b_bar,
            c: self.c_tilde(),
            d: self.d.clone(),
        }
    }

    /// Keeps the continuous system stable and the step size positive.
    pub fn project(&mut self) {
        for v in &mut self.lambda_re {
            *v = v.min(LAMBDA_RE_MAX);
        }
        for v in &mut self.log_delta {
            *v = v.clamp(LOG_DELTA_BOUNDS.0, LOG_DELTA_BOUNDS.1);
        }
    }

    pub fn n_real_params(&self) -> usize {
        2 * self.q + 4 * self.q * self.p + self.p + self.q
    }

    /// Chains discrete-system gradients back to the continuous parameters.
    pub fn backprop_discretization(&self, g: &DiscreteGrads) -> S5Grads {
        let (q, p) = (self.q, self.p);
        let lambda = self.lambda();
        let b = self.b_tilde();
        let delta = self.delta();
        let mut out = S5Grads::zeros(q, p);
        for i in 0..q {
            let j = zoh_jacobian(lambda[i], delta[i]);
            let (_, kappa) = super::zoh::zoh_coefficients(lambda[i], delta[i]);
            let mut g_kappa = Complex64::new(0.0, 0.0);
            for k in 0..p {
                let gb = g.b_bar[i * p + k];
                g_kappa += gb * b[i * p + k].conj();
                let gbt = kappa.conj() * gb;
                out.b_re[i * p + k] = gbt.re;
                out.b_im[i * p + k] = gbt.im;
            }
            let g_lb = g.lambda_bar[i];
            let g_lambda = j.dlb_dlambda.conj() * g_lb + j.dkappa_dlambda.conj() * g_kappa;
            out.lambda_re[i] = g_lambda.re;
            out.lambda_im[i] = g_lambda.im;
            let g_delta = (g_lb.conj() * j.dlb_ddelta).re + (g_kappa.conj() * j.dkappa_ddelta).re;
            out.log_delta[i] = delta[i] * g_delta;
        }
        for (k, gc) in g.c.iter().enumerate() {
            out.c_re[k] = gc.re;
            out.c_im[k] = gc.im;
        }
        out.d.copy_from_slice(&g.d);
        out
    }
}

/// Gradients with the same layout as [`S5Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct S5Grads {
    pub lambda_re: Vec<f64>,
    pub lambda_im: Vec<f64>,
    pub b_re: Vec<f64>,
    pub b_im: Vec<f64>,
    pub c_re: Vec<f64>,
    pub c_im: Vec<f64>,
    pub d: Vec<f64>,
    pub log_delta: Vec<f64>,
}

impl S5Grads {
    pub fn zeros(q: usize, p: usize) -> Self {
        S5Grads {
            lambda_re: vec![0.0; q],
            lambda_im: vec![0.0; q],
            b_re: vec![0.0; q * p],
            b_im: vec![0.0; q * p],
            c_re: vec![0.0; p * q],
            c_im: vec![0.0; p * q],
            d: vec![0.0; p],
            log_delta: vec![0.0; q],
        }
    }
}

/// HiPPO-N initialization: eigenvalues of the normal HiPPO matrix, input and
/// output matrices projected into its eigenbasis, `D = 1`, log-uniform steps.
pub fn init_s5_params(q: usize, p: usize, seed: u64) -> Result<S5Params> {
    init_s5_params_with(q, p, &mut seeded(seed, INIT))
}

pub fn init_s5_params_with(q: usize, p: usize, rng: &mut Rng) -> Result<S5Params> {
    if p == 0 {
        return Err(CssmError::config("state-space input width must be >= 1"));
    }
    let diag = diagonalize(&build_hippo_n(q)?)?;
    let scale = (q as f64).sqrt().recip();
    let mut gauss = || -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    };
    let b0: Vec<f64> = (0..q * p).map(|_| gauss()).collect();
    let c0: Vec<f64> = (0..p * q).map(|_| gauss()).collect();
    let v = &diag.eigen_basis;
    let vinv = &diag.eigen_basis_inv;
    let mut b = vec![Complex64::new(0.0, 0.0); q * p];
    for i in 0..q {
        for k in 0..p {
            b[i * p + k] = (0..q).map(|j| vinv[(i, j)] * b0[j * p + k]).sum();
        }
    }
    let mut c = vec![Complex64::new(0.0, 0.0); p * q];
    for k in 0..p {
        for i in 0..q {
            c[k * q + i] = (0..q).map(|j| v[(j, i)] * c0[k * q + j]).sum();
        }
    }
    let log_delta = (0..q)
        .map(|_| rng.gen_range(LOG_DELTA_INIT.0..LOG_DELTA_INIT.1))
        .collect();
    let mut out = S5Params {
        q,
        p,
        lambda_re: diag.lambda.iter().map(|l| l.re).collect(),
        lambda_im: diag.lambda.iter().map(|l| l.im).collect(),
        b_re: b.iter().map(|z| z.re).collect(),
        b_im: b.iter().map(|z| z.im).collect(),
        c_re: c.iter().map(|z| z.re).collect(),
        c_im: c.iter().map(|z| z.im).collect(),
        d: vec![1.0; p],
        log_delta,
    };
    out.project();
    Ok(out)
}
