//! Frequency front-end: Morlet CWT or STFT (E-Branch), learned 1-D
//! convolution (A-Branch) and temporal layer normalization.

mod conv;
mod frontend;
mod layernorm;
mod morlet;
mod stft;

pub use conv::{conv1d_branch, conv_kernel_len, same_pad, ConvBranchParams};
pub(crate) use conv::{correlate_same, correlate_same_grad_w, correlate_same_grad_x};
pub use frontend::{
    wavelet_conv_forward, ABranch, CwtReduction, EBranch, FrontEnd, FrontEndConfig, FrontEndParams,
    SpectralFrontEnd, BRANCH_WEIGHTS,
};
pub(crate) use layernorm::layernorm_forward;
pub use layernorm::{temporal_layernorm, TemporalLayerNormParams, DEFAULT_LN_EPS};
pub use morlet::{
    build_morlet_filterbank, cwt, cwt_complex, cwt_complex_direct, cwt_complex_fft, frequency_grid,
    morlet_scale, morlet_value, MorletFilterbank, DEFAULT_OMEGA0, ENVELOPE_CUTOFF,
    FFT_WORK_THRESHOLD,
};
pub use stft::{stft_branch, stft_window_len, StftPlan};
