//! Morlet filter bank and the continuous wavelet transform.
//!
//! Row `f` of the bank is
//! `psi_f(t) = s^-1/2 * pi^-1/4 * exp(i w0 t/s) * exp(-(t/s)^2 / 2)` with
//! `s = w0 * fs / (2 pi f)` and `t` in samples. Row frequencies are
//! `f_min + a (f_max - f_min) / F` for `a = 1..=F`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{CssmError, Result};

/// Envelope level below which the kernel is truncated.
pub const ENVELOPE_CUTOFF: f64 = 1e-4;

/// Direct evaluation is used while `T * total_kernel_len` stays below this.
pub const FFT_WORK_THRESHOLD: usize = 4_000_000;

pub const DEFAULT_OMEGA0: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MorletFilterbank {
    pub freqs: Vec<f64>,
    pub scales: Vec<f64>,
    /// Row kernels sampled on `t = -h..=h`; row `f` has length `2h_f + 1`.
    pub psi: Vec<Vec<Complex64>>,
    pub omega0: f64,
    pub fs: f64,
}

/// Frequency grid shared by the spectral front-ends.
pub fn frequency_grid(n_freqs: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    (1..=n_freqs)
        .map(|a| f_min + a as f64 * (f_max - f_min) / n_freqs as f64)
        .collect()
}

pub fn morlet_scale(freq: f64, fs: f64, omega0: f64) -> f64 {
    omega0 * fs / (2.0 * PI * freq)
}

pub fn morlet_value(t: f64, scale: f64, omega0: f64) -> Complex64 {
    let u = t / scale;
    let amp = scale.recip().sqrt() * PI.powf(-0.25) * (-0.5 * u * u).exp();
    Complex64::from_polar(amp, omega0 * u)
}

pub fn build_morlet_filterbank(
    n_freqs: usize,
    f_min: f64,
    f_max: f64,
    fs: f64,
    omega0: f64,
) -> Result<MorletFilterbank> {
    if n_freqs < 1 {
        return Err(CssmError::config("filter bank needs F >= 1"));
    }
    if !(f_min > 0.0 && f_min < f_max) {
        return Err(CssmError::config(format!(
            "need 0 < f_min < f_max, got ({f_min}, {f_max})"
        )));
    }
    if f_max > fs / 2.0 {
        return Err(CssmError::config(format!(
            "f_max = {f_max} Hz exceeds the Nyquist frequency {} Hz",
            fs / 2.0
        )));
    }
    if !(omega0 > 0.0) {
        return Err(CssmError::config("omega0 must be positive"));
    }
    let freqs = frequency_grid(n_freqs, f_min, f_max);
    let reach = (-2.0 * ENVELOPE_CUTOFF.ln()).sqrt();
    let scales: Vec<f64> = freqs.iter().map(|&f| morlet_scale(f, fs, omega0)).collect();
    let psi = scales
        .iter()
        .map(|&s| {
            let h = (s * reach).ceil() as isize;
            (-h..=h)
                .map(|t| morlet_value(t as f64, s, omega0))
                .collect()
        })
        .collect();
    Ok(MorletFilterbank {
        freqs,
        scales,
        psi,
        omega0,
        fs,
    })
}

impl MorletFilterbank {
    pub fn n_freqs(&self) -> usize {
        self.freqs.len()
    }

    pub fn kernel_len(&self, f: usize) -> usize {
        self.psi[f].len()
    }

    pub fn total_kernel_len(&self) -> usize {
        self.psi.iter().map(Vec::len).sum()
    }

    /// CSV dump with columns `freq_hz,scale_s,kernel_len`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq_hz,scale_s,kernel_len\n");
        for f in 0..self.n_freqs() {
            s.push_str(&format!(
                "{},{},{}\n",
                self.freqs[f],
                self.scales[f],
                self.kernel_len(f)
            ));
        }
        s
    }
}

/// Complex coefficients `sum_j x[t + j] conj(psi_f[j])`, zero-padded, `[F x T]`.
pub fn cwt_complex_direct(x: &[f64], bank: &MorletFilterbank) -> Vec<Complex64> {
    let t_len = x.len();
    let mut out = Vec::with_capacity(bank.n_freqs() * t_len);
    for kernel in &bank.psi {
        let h = (kernel.len() / 2) as isize;
        for t in 0..t_len as isize {
            let lo = (-h).max(-t);
            let hi = h.min(t_len as isize - 1 - t);
            let mut acc = Complex64::new(0.0, 0.0);
            for j in lo..=hi {
                acc += kernel[(j + h) as usize].conj() * x[(t + j) as usize];
            }
            out.push(acc);
        }
    }
    out
}

/// Same result as [`cwt_complex_direct`] through FFT-based linear correlation.
pub fn cwt_complex_fft(x: &[f64], bank: &MorletFilterbank) -> Vec<Complex64> {
    let t_len = x.len();
    let mut planner = FftPlanner::new();
    let mut out = Vec::with_capacity(bank.n_freqs() * t_len);
    let max_h = bank.psi.iter().map(|k| k.len() / 2).max().unwrap_or(0);
    let n = (t_len + max_h + 1).next_power_of_two();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut xs: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    xs.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut xs);
    for kernel in &bank.psi {
        let h = (kernel.len() / 2) as isize;
        // g[n] = conj(psi[-n]) so that correlation becomes convolution
        let mut g = vec![Complex64::new(0.0, 0.0); n];
        for j in -h..=h {
            let idx = (-j).rem_euclid(n as isize) as usize;
            g[idx] = kernel[(j + h) as usize].conj();
        }
        fwd.process(&mut g);
        for (gi, xi) in g.iter_mut().zip(&xs) {
            *gi *= xi;
        }
        inv.process(&mut g);
        let scale = 1.0 / n as f64;
        out.extend(g[..t_len].iter().map(|c| c * scale));
    }
    out
}

pub fn cwt_complex(x: &[f64], bank: &MorletFilterbank) -> Vec<Complex64> {
    if x.len() * bank.total_kernel_len() > FFT_WORK_THRESHOLD {
        cwt_complex_fft(x, bank)
    } else {
        cwt_complex_direct(x, bank)
    }
}

/// CWT magnitude map `[F x T]`, row-major.
pub fn cwt(x: &[f64], bank: &MorletFilterbank) -> Vec<f64> {
    cwt_complex(x, bank).iter().map(|c| c.norm()).collect()
}
