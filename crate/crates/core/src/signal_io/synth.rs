//! Synthetic motor-imagery recordings.
//!
//! Every electrode carries a band-limited Gaussian "rhythm" (the carrier
//! band, e.g. the mu band) plus broadband white noise. On the electrodes
//! listed as informative for the sample's class, the rhythm amplitude is
//! multiplied by `1 + depth * g(t)`, where `g` ramps from 0 to 1 at the
//! imagery onset and stays at 1. `snr_db` is the ratio of baseline rhythm
//! power to white-noise power.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, SignalTensor};
use crate::error::{CssmError, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_electrodes: usize,
    pub n_times: usize,
    pub fs: f64,
    pub n_classes: usize,
    /// Informative electrode indices for each class.
    pub informative: Vec<Vec<usize>>,
    /// Carrier band in Hz.
    pub band: (f64, f64),
    pub modulation_depth: f64,
    pub snr_db: f64,
    pub n_samples: usize,
    /// Samples are assigned to this many contiguous groups (subjects/sessions).
    pub n_groups: usize,
    /// Fraction of the trial before the imagery onset.
    #[serde(default = "default_onset")]
    pub onset_fraction: f64,
    /// Relative per-sample, per-electrode amplitude jitter.
    #[serde(default = "default_jitter")]
    pub amplitude_jitter: f64,
    pub seed: u64,
}

fn default_onset() -> f64 {
    0.25
}

fn default_jitter() -> f64 {
    0.2
}

impl Default for SyntheticSpec {
    /// Two classes, eight electrodes, informative electrodes 2 and 5, mu band.
    fn default() -> Self {
        SyntheticSpec {
            n_electrodes: 8,
            n_times: 256,
            fs: 128.0,
            n_classes: 2,
            informative: vec![vec![2], vec![5]],
            band: (8.0, 12.0),
            modulation_depth: 1.0,
            snr_db: 5.0,
            n_samples: 600,
            n_groups: 6,
            onset_fraction: 0.25,
            amplitude_jitter: 0.2,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_electrodes < 1 || self.n_times < 2 {
            return Err(CssmError::config("synthetic spec needs M >= 1 and T >= 2"));
        }
        if !(self.fs > 0.0) {
            return Err(CssmError::config("synthetic fs must be positive"));
        }
        if self.n_classes < 2 {
            return Err(CssmError::config("synthetic spec needs at least 2 classes"));
        }
        if self.informative.len() != self.n_classes {
            return Err(CssmError::config(format!(
                "{} informative-electrode lists for {} classes",
                self.informative.len(),
                self.n_classes
            )));
        }
        for (c, list) in self.informative.iter().enumerate() {
            if let Some(&e) = list.iter().find(|&&e| e >= self.n_electrodes) {
                return Err(CssmError::config(format!(
                    "class {c}: informative electrode {e} >= M = {}",
                    self.n_electrodes
                )));
            }
        }
        let (lo, hi) = self.band;
        if !(lo > 0.0 && lo < hi && hi < self.fs / 2.0) {
            return Err(CssmError::config(format!(
                "carrier band ({lo}, {hi}) Hz must lie within (0, {}) Hz",
                self.fs / 2.0
            )));
        }
        if !(self.modulation_depth >= 0.0) || !self.snr_db.is_finite() {
            return Err(CssmError::config(
                "modulation depth must be >= 0 and SNR finite",
            ));
        }
        if !(0.0..1.0).contains(&self.onset_fraction) {
            return Err(CssmError::config("onset_fraction must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) {
            return Err(CssmError::config("amplitude_jitter must lie in [0, 1)"));
        }
        if self.n_samples < self.n_classes || self.n_groups < 1 || self.n_groups > self.n_samples {
            return Err(CssmError::config(
                "need n_samples >= n_classes and 1 <= n_groups <= n_samples",
            ));
        }
        Ok(())
    }
}

/// Unit-power Gaussian noise restricted to `band` by spectral masking.
fn band_limited(
    n: usize,
    fs: f64,
    band: (f64, f64),
    r: &mut rng::Rng,
    planner: &mut FftPlanner<f64>,
) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(r), 0.0))
        .collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        if f < band.0 || f > band.1 {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        x.iter().map(|v| v / rms).collect()
    } else {
        x
    }
}

/// Onset envelope: 0 before onset, raised-cosine ramp over 10% of the trial, then 1.
fn onset_envelope(n: usize, onset_fraction: f64) -> Vec<f64> {
    let start = onset_fraction * n as f64;
    let ramp = (0.1 * n as f64).max(1.0);
    (0..n)
        .map(|i| {
            let u = (i as f64 - start) / ramp;
            if u <= 0.0 {
                0.0
            } else if u >= 1.0 {
                1.0
            } else {
                0.5 - 0.5 * (PI * u).cos()
            }
        })
        .collect()
}

/// Generates a balanced labeled dataset; deterministic given `spec.seed`.
/// Values are rounded to single precision to match the on-disk format.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let (m, t) = (spec.n_electrodes, spec.n_times);
    let envelope = onset_envelope(t, spec.onset_fraction);
    let amplitude = 10f64.powf(spec.snr_db / 20.0);
    let samples: Vec<SignalTensor> = (0..spec.n_samples)
        .into_par_iter()
        .map(|i| {
            let label = i % spec.n_classes;
            let mut r = rng::seeded_indexed(spec.seed, rng::stream::SYNTH, i as u64);
            let mut planner = FftPlanner::new();
            let mut data = Vec::with_capacity(m * t);
            for e in 0..m {
                let carrier = band_limited(t, spec.fs, spec.band, &mut r, &mut planner);
                let jitter = 1.0 + spec.amplitude_jitter * (2.0 * r.gen::<f64>() - 1.0);
                let informative = spec.informative[label].contains(&e);
                for k in 0..t {
                    let gain = if informative {
                        1.0 + spec.modulation_depth * envelope[k]
                    } else {
                        1.0
                    };
                    let noise: f64 = StandardNormal.sample(&mut r);
                    let v = amplitude * jitter * gain * carrier[k] + noise;
                    data.push(v as f32 as f64);
                }
            }
            SignalTensor::new(m, t, data, spec.fs).expect("generated signal is valid")
        })
        .collect();
    let labels = (0..spec.n_samples).map(|i| i % spec.n_classes).collect();
    let groups = (0..spec.n_samples)
        .map(|i| (i * spec.n_groups / spec.n_samples) as u32)
        .collect();
    LabeledDataset::new(samples, labels, groups, spec.n_classes)
}
