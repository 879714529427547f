//! Fusion of the deterministic spectral branch (E-Branch) and the learned
//! convolution branch (A-Branch): `x~_m = 1/2 LN(E(x_m)) + 1/2 LN(Conv(x_m))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conv::{conv1d_branch, ConvBranchParams};
use super::layernorm::{temporal_layernorm, TemporalLayerNormParams};
use super::morlet::{build_morlet_filterbank, cwt_complex, MorletFilterbank, DEFAULT_OMEGA0};
use super::stft::StftPlan;
use crate::error::{CssmError, Result};
use crate::signal_io::SignalTensor;
use crate::tensor::Tensor;

/// Weights of the E-Branch and A-Branch when both are enabled.
pub const BRANCH_WEIGHTS: [f64; 2] = [0.5, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EBranch {
    Cwt,
    Stft,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ABranch {
    Conv1d,
    None,
}

/// How complex CWT coefficients become real features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CwtReduction {
    #[default]
    Magnitude,
    RealPart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontEndConfig {
    pub e_branch: EBranch,
    pub a_branch: ABranch,
    pub f_min: f64,
    pub f_max: f64,
    #[serde(default = "default_omega0")]
    pub omega0: f64,
    #[serde(default)]
    pub cwt_reduction: CwtReduction,
}

fn default_omega0() -> f64 {
    DEFAULT_OMEGA0
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        FrontEndConfig {
            e_branch: EBranch::Cwt,
            a_branch: ABranch::Conv1d,
            f_min: 1.0,
            f_max: 100.0,
            omega0: DEFAULT_OMEGA0,
            cwt_reduction: CwtReduction::Magnitude,
        }
    }
}

impl FrontEndConfig {
    pub fn validate(&self) -> Result<()> {
        if self.e_branch == EBranch::None && self.a_branch == ABranch::None {
            return Err(CssmError::config(
                "front-end has both branches disabled; disable the whole module instead",
            ));
        }
        Ok(())
    }

    pub fn branch_count(&self) -> usize {
        usize::from(self.e_branch != EBranch::None) + usize::from(self.a_branch != ABranch::None)
    }
}

/// A prepared deterministic spectral transform.
#[derive(Debug, Clone)]
pub enum SpectralFrontEnd {
    Cwt {
        bank: MorletFilterbank,
        reduction: CwtReduction,
    },
    Stft(StftPlan),
}

impl SpectralFrontEnd {
    pub fn n_freqs(&self) -> usize {
        match self {
            SpectralFrontEnd::Cwt { bank, .. } => bank.n_freqs(),
            SpectralFrontEnd::Stft(p) => p.n_freqs(),
        }
    }

    pub fn freqs(&self) -> &[f64] {
        match self {
            SpectralFrontEnd::Cwt { bank, .. } => &bank.freqs,
            SpectralFrontEnd::Stft(p) => &p.freqs,
        }
    }

    /// `[F x T]` real map for one electrode.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SpectralFrontEnd::Cwt { bank, reduction } => {
                let c = cwt_complex(x, bank);
                match reduction {
                    CwtReduction::Magnitude => c.iter().map(|z| z.norm()).collect(),
                    CwtReduction::RealPart => c.iter().map(|z| z.re).collect(),
                }
            }
            SpectralFrontEnd::Stft(p) => p.transform(x),
        }
    }

    /// `[M x F x T]` features of a recording.
    pub fn features(&self, x: &SignalTensor) -> Tensor {
        let rows: Vec<Vec<f64>> = (0..x.n_electrodes())
            .into_par_iter()
            .map(|m| self.transform(x.row(m)))
            .collect();
        Tensor::from_vec(
            &[x.n_electrodes(), self.n_freqs(), x.n_times()],
            rows.concat(),
        )
    }
}

/// Front-end configuration bound to a sampling rate and frequency count.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    pub cfg: FrontEndConfig,
    pub n_freqs: usize,
    pub fs: f64,
    pub spectral: Option<SpectralFrontEnd>,
}

impl FrontEnd {
    pub fn new(cfg: &FrontEndConfig, n_freqs: usize, fs: f64) -> Result<Self> {
        cfg.validate()?;
        let spectral = match cfg.e_branch {
            EBranch::Cwt => Some(SpectralFrontEnd::Cwt {
                bank: build_morlet_filterbank(n_freqs, cfg.f_min, cfg.f_max, fs, cfg.omega0)?,
                reduction: cfg.cwt_reduction,
            }),
            EBranch::Stft => Some(SpectralFrontEnd::Stft(StftPlan::new(
                n_freqs, cfg.f_min, cfg.f_max, fs,
            )?)),
            EBranch::None => None,
        };
        Ok(FrontEnd {
            cfg: cfg.clone(),
            n_freqs,
            fs,
            spectral,
        })
    }

    /// Row frequencies in Hz (the analysis grid, also for conv-only configs).
    pub fn freqs(&self) -> Vec<f64> {
        super::morlet::frequency_grid(self.n_freqs, self.cfg.f_min, self.cfg.f_max)
    }
}

/// Parameters of the front-end in standalone form.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndParams {
    pub conv: Option<ConvBranchParams>,
    pub ln_e: Option<TemporalLayerNormParams>,
    pub ln_a: Option<TemporalLayerNormParams>,
}

/// `X~ = [M x F x T]` for one recording.
pub fn wavelet_conv_forward(x: &SignalTensor, fe: &FrontEnd, p: &FrontEndParams) -> Result<Tensor> {
    let (m, t, f) = (x.n_electrodes(), x.n_times(), fe.n_freqs);
    let both = fe.cfg.branch_count() == 2;
    let (w_e, w_a) = if both {
        (BRANCH_WEIGHTS[0], BRANCH_WEIGHTS[1])
    } else {
        (1.0, 1.0)
    };
    let mut out = vec![0.0; m * f * t];
    if let Some(spec) = &fe.spectral {
        let ln = p
            .ln_e
            .as_ref()
            .ok_or_else(|| CssmError::config("E-Branch enabled without LayerNorm parameters"))?;
        let e = spec.features(x);
        let y = temporal_layernorm(e.data(), t, ln)?;
        for (o, v) in out.iter_mut().zip(y) {
            *o += w_e * v;
        }
    }
    if fe.cfg.a_branch == ABranch::Conv1d {
        let conv = p
            .conv
            .as_ref()
            .ok_or_else(|| CssmError::config("A-Branch enabled without kernels"))?;
        let ln = p
            .ln_a
            .as_ref()
            .ok_or_else(|| CssmError::config("A-Branch enabled without LayerNorm parameters"))?;
        for mi in 0..m {
            let a = conv1d_branch(x.row(mi), conv)?;
            let y = temporal_layernorm(&a, t, ln)?;
            for (o, v) in out[mi * f * t..(mi + 1) * f * t].iter_mut().zip(y) {
                *o += w_a * v;
            }
        }
    }
    Ok(Tensor::from_vec(&[m, f, t], out))
}
