#![allow(dead_code)]

pub mod oracles;

use cssm_core::cortical_blocks::ModelConfig;
use cssm_core::signal_io::SignalTensor;
use cssm_core::wavelet_conv::{ABranch, CwtReduction, EBranch, FrontEndConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// M=4, F=8, T=64, L=1, Q=8, N=2 at 64 Hz.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        n_electrodes: 4,
        n_times: 64,
        fs: 64.0,
        n_freqs: 8,
        n_classes: 2,
        n_blocks: 1,
        state_dim: 8,
        enable_wavelet_conv: true,
        enable_frequency_ssm: true,
        enable_channel_ssm: true,
        front_end: FrontEndConfig {
            e_branch: EBranch::Cwt,
            a_branch: ABranch::Conv1d,
            f_min: 2.0,
            f_max: 30.0,
            omega0: 6.0,
            cwt_reduction: CwtReduction::Magnitude,
        },
        ffn_expansion: 2,
        head_hidden: 16,
        ln_eps: 1e-6,
    }
}

pub fn random_signal(cfg: &ModelConfig, seed: u64) -> SignalTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_electrodes * cfg.n_times;
    let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SignalTensor::new(cfg.n_electrodes, cfg.n_times, data, cfg.fs).unwrap()
}
