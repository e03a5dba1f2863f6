//! Dense tensors, layer kernels, losses, Adam and a finite-difference
//! gradient checker. Everything is generic over [`Real`](crate::num::Real).

mod activation;
mod adam;
mod batchnorm;
mod gradcheck;
mod loss;
mod params;
mod tensor;

use thiserror::Error;

pub use activation::{d_elu, elu, sigmoid};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use batchnorm::{
    batchnorm, batchnorm_backward, batchnorm_infer, batchnorm_train, update_running, BnCache,
    BnGrads, BnMode, RunningStats, BN_EPS, BN_MOMENTUM,
};
pub use gradcheck::{
    grad_check, grad_check_coords, relative_error, BranchTrace, Evaluation, GradCheckReport,
    Objective, SmoothObjective, FD_STEP,
};
pub use loss::{l2_grad_into, l2_penalty, mape_grad, mape_loss};
pub use params::{Param, ParamId, ParamKind, ParamSet};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("batch of {0} rows is too small for train-mode batch norm (need >= 2)")]
    BatchTooSmall(usize),
    #[error("{0}")]
    Empty(&'static str),
}
