//! Hann-windowed sliding DFT magnitude (hop 1, centred window).

use std::f64::consts::PI;

use num_complex::Complex64;

use super::morlet::frequency_grid;
use crate::error::{CssmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StftPlan {
    pub freqs: Vec<f64>,
    pub window: Vec<f64>,
    pub fs: f64,
    /// `twiddle[f * W + n] = exp(-i 2 pi f (n - W/2) / fs)`
    twiddle: Vec<Complex64>,
}

pub fn stft_window_len(fs: f64) -> usize {
    ((fs / 2.0).round() as usize).max(1)
}

impl StftPlan {
    pub fn new(n_freqs: usize, f_min: f64, f_max: f64, fs: f64) -> Result<Self> {
        if n_freqs < 1 || !(f_min > 0.0 && f_min < f_max) || f_max > fs / 2.0 {
            return Err(CssmError::config(format!(
                "STFT needs F >= 1 and 0 < f_min < f_max <= fs/2, got F={n_freqs}, ({f_min}, {f_max}) @ {fs} Hz"
            )));
        }
        let w = stft_window_len(fs);
        let window: Vec<f64> = (0..w)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / w as f64).cos())
            .collect();
        let norm: f64 = window.iter().sum();
        let freqs = frequency_grid(n_freqs, f_min, f_max);
        let c = (w / 2) as f64;
        let twiddle = freqs
            .iter()
            .flat_map(|&f| {
                window.iter().enumerate().map(move |(n, &wn)| {
                    Complex64::from_polar(wn / norm, -2.0 * PI * f * (n as f64 - c) / fs)
                })
            })
            .collect();
        Ok(StftPlan {
            freqs,
            window,
            fs,
            twiddle,
        })
    }

    pub fn n_freqs(&self) -> usize {
        self.freqs.len()
    }

    /// Magnitude map `[F x T]`; a unit-amplitude tone at a grid frequency
    /// yields about 0.5 away from the edges.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let t_len = x.len() as isize;
        let w = self.window.len();
        let c = (w / 2) as isize;
        let mut out = Vec::with_capacity(self.n_freqs() * x.len());
        for f in 0..self.n_freqs() {
            let tw = &self.twiddle[f * w..(f + 1) * w];
            for t in 0..t_len {
                let mut acc = Complex64::new(0.0, 0.0);
                for (n, z) in tw.iter().enumerate() {
                    let idx = t + n as isize - c;
                    if idx >= 0 && idx < t_len {
                        acc += z * x[idx as usize];
                    }
                }
                out.push(acc.norm());
            }
        }
        out
    }
}

pub fn stft_branch(x: &[f64], n_freqs: usize, f_min: f64, f_max: f64, fs: f64) -> Result<Vec<f64>> {
    Ok(StftPlan::new(n_freqs, f_min, f_max, fs)?.transform(x))
}
