//! Dense matrices, layers with explicit backward passes, Adam/AdamW, and a
//! central-difference gradient checker.

mod gradcheck;
mod layers;
mod matrix;
mod optim;

pub use gradcheck::{finite_diff_check, GradCheckReport, REL_ERR_FLOOR};
pub use layers::{
    dropout, huber_loss, linear_backward, linear_forward, relu, relu_backward, stats_pool,
    stats_pool_backward, validate_dropout, DropoutMask, Linear, LinearGrad, PoolingMode, STD_GRAD_FLOOR,
};
pub use matrix::{dot, matmul_nn, matmul_nt, matmul_tn_acc, Matrix};
pub use optim::{AdamConfig, OptimState};
