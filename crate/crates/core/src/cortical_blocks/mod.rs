//! Frequency-SSM and Channel-SSM branches, their residual blocks and the
//! fusion classification head.

mod blocks;
mod config;
mod forward;
mod params;

pub use blocks::{
    channel_ssm_block, ffn_apply, frequency_ssm_block, fusion_head, fusion_logits, lift_forward,
    mean_over_time, residual_ssm_block, softmax,
};
pub use config::{ablation_grid, ModelConfig};
pub use forward::{model_forward, ForwardNodes, PreparedInput, SsmClassifier};
pub use params::{
    count_parameters, expected_shapes, BlockIds, BlockParams, FfnParams, HeadParams, ModelLayout,
    ModelParams, ParamId, ParamStore, ParameterCount, LIFT_SCALE_STD,
};
