//! Diagonal MIMO state-space layer: HiPPO-N initialization, zero-order-hold
//! discretization and parallel-scan evaluation with its adjoint.

mod hippo;
mod params;
mod scan;
mod zoh;

pub use hippo::{
    build_hippo_n, diagonalize, diagonalize_normal, normality_residual, DiagonalizedSSM, HippoSpec,
};
pub use params::{
    init_s5_params, init_s5_params_with, DiscreteS5, S5Grads, S5Params, LAMBDA_RE_MAX,
    LOG_DELTA_BOUNDS, LOG_DELTA_INIT,
};
pub use scan::{brent_kung_scan, ssm_apply, ssm_backward, ssm_readout, ssm_states, DiscreteGrads};
pub use zoh::{zoh_coefficients, zoh_discretize, zoh_jacobian, ZohJacobian, ZOH_GUARD};
