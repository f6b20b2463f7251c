//! Losses, reverse-mode gradients over a [`Network`](crate::layers::Network),
//! the Adam optimiser and finite-difference verification.

mod adam;
mod gradcheck;
mod init;
mod loss;

pub use adam::{adam_step, adam_update, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_against, relative_error, GradCheckEntry, GradCheckReport};
pub use init::{init_operational, init_selfgop_from_denoiser};
pub use loss::{
    backward, evaluate, loss_group_l2, loss_hybrid, loss_mse_mask, loss_value, ClassGroups, LossKind, LossSpec,
    Target,
};
