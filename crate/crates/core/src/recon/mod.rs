//! Learning-aided compressive reconstruction: periodic finite differences,
//! semi-random Fourier sampling, probability-map weights and a weighted TV
//! ADMM solver.

mod grad;
mod mask;
mod phantom;
mod tv;
mod weights;

pub use grad::{div, grad, gradient_support};
pub use mask::{measure_image, semi_random_mask, zero_filling, FourierSamplingMask};
pub use phantom::piecewise_constant_phantom;
pub use tv::{admm_tv, admm_weighted_tv, tv_objective, TvConfig, TvResult};
pub use weights::{weighted_lasso_ista, weighted_soft_threshold, weights_from_prob, WeightMaps};
