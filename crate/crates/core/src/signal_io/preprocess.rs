//! Decimation and signal-to-noise measurement/degradation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use super::dataset::SignalTensor;
use crate::error::{CssmError, Result};
use crate::rng;

/// Taps per side of the anti-alias filter, per unit of decimation ratio.
const HALF_TAPS_PER_RATIO: usize = 8;

/// Hamming-windowed sinc low-pass with cutoff `0.9 * target_fs / 2`,
/// normalised to unit DC gain.
pub fn antialias_taps(ratio: usize) -> Vec<f64> {
    let half = HALF_TAPS_PER_RATIO * ratio;
    let n = 2 * half + 1;
    // cutoff as a fraction of the input rate
    let fc = 0.9 * 0.5 / ratio as f64;
    // built from |j| so the filter is exactly symmetric
    let mut taps: Vec<f64> = (0..n)
        .map(|i| {
            let j = i.abs_diff(half) as f64;
            let sinc = if j == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * j).sin() / (PI * j)
            };
            let w = 0.54 + 0.46 * (PI * j / half as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

fn decimation_ratio(fs: f64, target_fs: f64) -> Result<usize> {
    if !(target_fs > 0.0) || target_fs > fs {
        return Err(CssmError::UnsupportedRate {
            from: fs,
            to: target_fs,
        });
    }
    let r = fs / target_fs;
    let ri = r.round();
    if (r - ri).abs() > 1e-9 * r {
        return Err(CssmError::UnsupportedRate {
            from: fs,
            to: target_fs,
        });
    }
    Ok(ri as usize)
}

/// Zero-phase anti-alias filtering followed by integer decimation.
/// Boundaries are extended with the edge value, so constants pass unchanged.
pub fn downsample(x: &SignalTensor, target_fs: f64) -> Result<SignalTensor> {
    let ratio = decimation_ratio(x.fs, target_fs)?;
    if ratio == 1 {
        return Ok(x.clone());
    }
    let taps = antialias_taps(ratio);
    let half = (taps.len() / 2) as isize;
    let t_in = x.n_times();
    let t_out = t_in / ratio;
    if t_out < 2 {
        return Err(CssmError::dim(format!(
            "decimating {t_in} samples by {ratio} leaves fewer than 2"
        )));
    }
    let last = t_in as isize - 1;
    let mut out = Vec::with_capacity(x.n_electrodes() * t_out);
    for row in x.rows() {
        for i in 0..t_out {
            let c = (i * ratio) as isize;
            let mut acc = 0.0;
            for (k, &h) in taps.iter().enumerate() {
                let idx = (c + k as isize - half).clamp(0, last) as usize;
                acc += h * row[idx];
            }
            out.push(acc);
        }
    }
    let mut y = SignalTensor::new(x.n_electrodes(), t_out, out, target_fs)?;
    y.electrode_labels = x.electrode_labels.clone();
    Ok(y)
}

/// Hann-windowed one-sided spectrum of one row: `(frequency_hz, weight, X_k)`.
/// `weight * |X_k|^2` is the row's periodogram power at bin k.
fn windowed_spectrum(
    row: &[f64],
    fs: f64,
    planner: &mut FftPlanner<f64>,
) -> Vec<(f64, f64, Complex64)> {
    let n = row.len();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = row
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
            Complex64::new(v * w, 0.0)
        })
        .collect();
    fft.process(&mut buf);
    (0..=n / 2)
        .map(|k| {
            let edge = k == 0 || (n % 2 == 0 && k == n / 2);
            let weight = if edge { 1.0 } else { 2.0 };
            (k as f64 * fs / n as f64, weight, buf[k])
        })
        .collect()
}

fn check_band(fs: f64, band: (f64, f64)) -> Result<()> {
    let (lo, hi) = band;
    if !(lo > 0.0 && lo < hi && hi < fs / 2.0) {
        return Err(CssmError::config(format!(
            "band ({lo}, {hi}) Hz must lie within (0, {}) Hz",
            fs / 2.0
        )));
    }
    Ok(())
}

fn in_band(f: f64, band: (f64, f64)) -> bool {
    f >= band.0 && f <= band.1
}

/// In-band and out-of-band periodogram power summed over electrodes.
pub fn band_powers(x: &SignalTensor, band: (f64, f64)) -> Result<(f64, f64)> {
    check_band(x.fs, band)?;
    let mut planner = FftPlanner::new();
    let (mut sig, mut noise) = (0.0, 0.0);
    for row in x.rows() {
        for (f, w, c) in windowed_spectrum(row, x.fs, &mut planner) {
            if in_band(f, band) {
                sig += w * c.norm_sqr();
            } else {
                noise += w * c.norm_sqr();
            }
        }
    }
    Ok((sig, noise))
}

/// `10 log10(in-band / out-of-band)` power; `+inf` when out-of-band power is zero.
pub fn compute_snr(x: &SignalTensor, signal_band: (f64, f64)) -> Result<f64> {
    let (s, n) = band_powers(x, signal_band)?;
    if n == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (s / n).log10())
}

#[derive(Debug, Clone, PartialEq)]
pub enum DegradeStatus {
    /// Noise was added with this multiplier on unit-variance Gaussian noise.
    Degraded { noise_std: f64 },
    /// Target was not below the current SNR; signal returned unchanged.
    NoOp { current_db: f64 },
}

#[derive(Debug, Clone)]
pub struct Degraded {
    pub signal: SignalTensor,
    pub status: DegradeStatus,
}

/// Adds seeded white Gaussian noise so the measured SNR equals `target_db`.
///
/// The noise scale solves the quadratic that the periodogram band powers of
/// `x + c * noise` satisfy, so the re-measured SNR hits the target up to
/// rounding. Targets at or below the white-noise floor of the band are
/// unreachable with broadband noise and rejected.
pub fn degrade_snr(
    x: &SignalTensor,
    signal_band: (f64, f64),
    target_db: f64,
    seed: u64,
) -> Result<Degraded> {
    check_band(x.fs, signal_band)?;
    let current = compute_snr(x, signal_band)?;
    if target_db >= current {
        log::warn!(
            "degrade_snr: target {target_db:.2} dB not below current {current:.2} dB, no-op"
        );
        return Ok(Degraded {
            signal: x.clone(),
            status: DegradeStatus::NoOp {
                current_db: current,
            },
        });
    }
    let mut r = rng::seeded(seed, rng::stream::NOISE);
    let noise: Vec<f64> = (0..x.data().len())
        .map(|_| StandardNormal.sample(&mut r))
        .collect();

    let mut planner = FftPlanner::new();
    let t = x.n_times();
    // band powers of x (s_*), of noise (n_*) and their cross terms (x_*)
    let (mut s_in, mut s_out, mut n_in, mut n_out, mut x_in, mut x_out) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (m, row) in x.rows().enumerate() {
        let sx = windowed_spectrum(row, x.fs, &mut planner);
        let sn = windowed_spectrum(&noise[m * t..(m + 1) * t], x.fs, &mut planner);
        for ((f, w, a), (_, _, b)) in sx.into_iter().zip(sn) {
            let cross = w * (a * b.conj()).re;
            if in_band(f, signal_band) {
                s_in += w * a.norm_sqr();
                n_in += w * b.norm_sqr();
                x_in += cross;
            } else {
                s_out += w * a.norm_sqr();
                n_out += w * b.norm_sqr();
                x_out += cross;
            }
        }
    }
    let ratio = 10f64.powf(target_db / 10.0);
    let qa = n_in - ratio * n_out;
    let qb = 2.0 * (x_in - ratio * x_out);
    let qc = s_in - ratio * s_out;
    let c = smallest_positive_root(qa, qb, qc).ok_or_else(|| {
        CssmError::config(format!(
            "target {target_db:.2} dB is unreachable with white noise for band ({}, {}) Hz at {} Hz",
            signal_band.0, signal_band.1, x.fs
        ))
    })?;
    let data: Vec<f64> = x
        .data()
        .iter()
        .zip(&noise)
        .map(|(v, n)| v + c * n)
        .collect();
    let mut y = SignalTensor::new(x.n_electrodes(), t, data, x.fs)?;
    y.electrode_labels = x.electrode_labels.clone();
    Ok(Degraded {
        signal: y,
        status: DegradeStatus::Degraded { noise_std: c },
    })
}

fn smallest_positive_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if a.abs() < 1e-300 {
        let r = -c / b;
        return (r > 0.0 && r.is_finite()).then_some(r);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = [q / a, c / q];
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    roots.into_iter().find(|r| *r > 0.0 && r.is_finite())
}
