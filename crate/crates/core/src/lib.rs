//! Motor-imagery decoding from EEG/ECoG with a wavelet front-end and dual state-space branches.

pub mod cortical_blocks;
pub mod error;
pub mod explain;
pub mod metrics_eval;
pub mod rng;
pub mod s5_core;
pub mod signal_io;
pub mod tensor;
pub mod training;
pub mod wavelet_conv;

pub use error::{CssmError, Result};
pub use tensor::Tensor;
