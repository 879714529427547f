use serde::{Deserialize, Serialize};

use crate::error::{CssmError, Result};
use crate::wavelet_conv::{conv_kernel_len, ABranch, EBranch, FrontEndConfig, DEFAULT_LN_EPS};

/// Architecture of the two-branch model. Serialized as the model section of
/// every run config; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Electrodes `M`.
    pub n_electrodes: usize,
    /// Samples per recording `T`.
    pub n_times: usize,
    /// Sampling rate in Hz.
    pub fs: f64,
    /// Frequency rows `F`.
    pub n_freqs: usize,
    /// Classes `N`.
    pub n_classes: usize,
    /// Blocks per enabled branch `L`.
    pub n_blocks: usize,
    /// State dimension `Q` (even).
    pub state_dim: usize,
    #[serde(default = "yes")]
    pub enable_wavelet_conv: bool,
    #[serde(default = "yes")]
    pub enable_frequency_ssm: bool,
    #[serde(default = "yes")]
    pub enable_channel_ssm: bool,
    #[serde(default)]
    pub front_end: FrontEndConfig,
    /// FFN hidden width as a multiple of the block's variable axis.
    #[serde(default = "default_expansion")]
    pub ffn_expansion: usize,
    /// Hidden width of the classification head; 0 makes the head linear.
    #[serde(default = "default_head_hidden")]
    pub head_hidden: usize,
    #[serde(default = "default_ln_eps")]
    pub ln_eps: f64,
}

fn yes() -> bool {
    true
}
fn default_expansion() -> usize {
    2
}
fn default_head_hidden() -> usize {
    256
}
fn default_ln_eps() -> f64 {
    DEFAULT_LN_EPS
}

impl ModelConfig {
    /// 62 electrodes at 250 Hz, 4 s windows, 50 frequency rows over 1-100 Hz.
    pub fn reference() -> Self {
        ModelConfig {
            n_electrodes: 62,
            n_times: 1000,
            fs: 250.0,
            n_freqs: 50,
            n_classes: 2,
            n_blocks: 2,
            state_dim: 64,
            enable_wavelet_conv: true,
            enable_frequency_ssm: true,
            enable_channel_ssm: true,
            front_end: FrontEndConfig::default(),
            ffn_expansion: 2,
            head_hidden: 256,
            ln_eps: DEFAULT_LN_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CssmError::Config(m));
        if self.n_electrodes == 0 || self.n_freqs == 0 {
            return bad("n_electrodes and n_freqs must be >= 1".into());
        }
        if self.n_times < 2 {
            return bad(format!("n_times must be >= 2, got {}", self.n_times));
        }
        if !(self.fs > 0.0) || !self.fs.is_finite() {
            return bad(format!("fs must be positive, got {}", self.fs));
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes must be >= 2, got {}", self.n_classes));
        }
        if !self.enable_frequency_ssm && !self.enable_channel_ssm {
            return bad(
                "at least one of the frequency and channel branches must be enabled".into(),
            );
        }
        if self.n_blocks == 0 {
            return bad("n_blocks must be >= 1".into());
        }
        if self.state_dim < 2 || self.state_dim % 2 != 0 {
            return bad(format!(
                "state_dim must be even and >= 2, got {}",
                self.state_dim
            ));
        }
        if self.ffn_expansion == 0 {
            return bad("ffn_expansion must be >= 1".into());
        }
        if !(self.ln_eps > 0.0) {
            return bad("ln_eps must be positive".into());
        }
        let fe = &self.front_end;
        if !(fe.f_min > 0.0 && fe.f_min < fe.f_max) {
            return bad(format!(
                "front_end needs 0 < f_min < f_max, got ({}, {})",
                fe.f_min, fe.f_max
            ));
        }
        if self.enable_wavelet_conv {
            fe.validate()?;
            if fe.e_branch != EBranch::None && fe.f_max > self.fs / 2.0 {
                return bad(format!(
                    "front_end f_max {} Hz exceeds the Nyquist rate {} Hz",
                    fe.f_max,
                    self.fs / 2.0
                ));
            }
            if fe.a_branch == ABranch::Conv1d && conv_kernel_len(self.fs) > self.n_times {
                return bad(format!(
                    "convolution kernel of {} samples exceeds n_times {}",
                    conv_kernel_len(self.fs),
                    self.n_times
                ));
            }
        }
        Ok(())
    }

    /// Input width of the classification head.
    pub fn head_input(&self) -> usize {
        let branches =
            usize::from(self.enable_frequency_ssm) + usize::from(self.enable_channel_ssm);
        branches * self.n_electrodes * self.n_freqs
    }

    /// The same architecture for recordings of a different length and rate.
    pub fn with_timing(&self, n_times: usize, fs: f64) -> Self {
        ModelConfig {
            n_times,
            fs,
            ..self.clone()
        }
    }
}

/// Front-end and module variants compared against the full model, in
/// table order. The full model appears once although it belongs to both
/// groups.
pub fn ablation_grid(base: &ModelConfig) -> Vec<(&'static str, ModelConfig)> {
    let front = |e: EBranch, a: ABranch| {
        let mut c = base.clone();
        c.enable_wavelet_conv = true;
        c.enable_frequency_ssm = true;
        c.enable_channel_ssm = true;
        c.front_end.e_branch = e;
        c.front_end.a_branch = a;
        c
    };
    let full = front(EBranch::Cwt, ABranch::Conv1d);
    let without = |f: fn(&mut ModelConfig)| {
        let mut c = full.clone();
        f(&mut c);
        c
    };
    vec![
        ("stft", front(EBranch::Stft, ABranch::None)),
        ("cwt", front(EBranch::Cwt, ABranch::None)),
        ("conv", front(EBranch::None, ABranch::Conv1d)),
        ("stft+conv", front(EBranch::Stft, ABranch::Conv1d)),
        ("cwt+conv", full.clone()),
        (
            "no_wavelet_conv",
            without(|c| c.enable_wavelet_conv = false),
        ),
        (
            "no_frequency_ssm",
            without(|c| c.enable_frequency_ssm = false),
        ),
        ("no_channel_ssm", without(|c| c.enable_channel_ssm = false)),
    ]
}
