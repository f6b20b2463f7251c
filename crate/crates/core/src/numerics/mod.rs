//! Dense numeric primitives: convolution, Hadamard powers, bilinear
//! shifting, unitary FFTs and small dense linear algebra.

mod conv;
mod fft;
mod linalg;
mod shift;

pub use conv::{conv2d_same, hadamard_pow};
pub use fft::{fft2, fft2_real, ifft2, Fft2};
pub use linalg::{largest_eigenvalue, pca_projection, solve_spd, SpdFactor};
pub use shift::{bilinear_shift, Shift};

pub(crate) use conv::{correlate_acc, correlate_adjoint_acc, correlate_weight_grad};
