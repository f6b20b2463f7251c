use crate::error::{arg_err, Result};
use crate::layers::{Activation, OperationalLayerParams, SelfGopParams};
use crate::rng::Rng;
use crate::tensor::Tensor;
use rand::Rng as _;

/// Kernel coefficients uniform with variance `1 / (fan_in * Q)`, where
/// `fan_in = C_in * f * f`; biases and shifts start at zero.
pub fn init_operational(
    c_in: usize,
    c_out: usize,
    order: usize,
    kernel: usize,
    activation: Activation,
    rng: &mut Rng,
) -> Result<OperationalLayerParams> {
    let mut p = OperationalLayerParams::zeros(c_in, c_out, order, kernel, activation)?;
    let fan_in = (c_in * kernel * kernel * order) as f64;
    let bound = libm::sqrt(3.0 / fan_in);
    p.weights.data_mut().iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
    Ok(p)
}

/// Self-GOP layer whose first-order weights equal the `n x m` denoiser and
/// whose higher orders and biases are zero, so its linear-activation output
/// is exactly `B y`.
pub fn init_selfgop_from_denoiser(denoiser: &Tensor, order: usize, activation: Activation) -> Result<SelfGopParams> {
    let (n, m) = denoiser.dims2()?;
    if order == 0 {
        return Err(arg_err!("Taylor order must be at least 1"));
    }
    let mut p = SelfGopParams::zeros(m, n, order, activation)?;
    p.weights.data_mut()[..n * m].copy_from_slice(denoiser.data());
    Ok(p)
}
