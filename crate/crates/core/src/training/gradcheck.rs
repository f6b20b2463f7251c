use alloc::vec::Vec;

use crate::error::{arg_err, Result};
use crate::layers::{Layer, Network};
use crate::tensor::Tensor;
use crate::training::loss::{backward, loss_difference, LossSpec, Target};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub layer: usize,
    /// `"weights"`, `"biases"` or `"shifts"`.
    pub tensor: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub tol: f64,
    pub max_rel_error: f64,
    pub worst: Option<GradCheckEntry>,
    pub violations: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares backpropagated gradients of the loss on `(input, target)` with
/// central differences for every scalar parameter.
pub fn grad_check(net: &Network, input: &Tensor, target: &Target, loss: &LossSpec, h: f64, tol: f64) -> Result<GradCheckReport> {
    let (_, grads) = backward(net, &[(input.clone(), target.clone())], loss)?;
    grad_check_against(net, input, target, loss, &grads, h, tol)
}

/// Like [`grad_check`] but against caller-supplied gradients.
///
/// Each numeric derivative is a central difference extrapolated over
/// steps `h`, `h / 2` and `h / 4`. Only the neuron owning the perturbed
/// parameter and the layers after it are re-evaluated.
pub fn grad_check_against(
    net: &Network,
    input: &Tensor,
    target: &Target,
    loss: &LossSpec,
    grads: &Network,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(arg_err!("step must be positive"));
    }
    loss.validate()?;
    let trace = net.trace(input)?;
    let mut work = net.clone();
    let mut report = GradCheckReport { checked: 0, tol, max_rel_error: 0.0, worst: None, violations: Vec::new() };
    let names: [&'static str; 3] = ["weights", "biases", "shifts"];
    for li in 0..net.layers().len() {
        let n_tensors = net.layers()[li].tensors().len();
        for ti in 0..n_tensors {
            let len = net.layers()[li].tensors()[ti].len();
            for j in 0..len {
                let unit = owner(&net.layers()[li], ti, j);
                let base = net.layers()[li].tensors()[ti].data()[j];
                let mut central = |step: f64| -> Result<f64> {
                    let mut at = |delta: f64| -> Result<(Tensor, Tensor)> {
                        work.layers_mut()[li].tensors_mut()[ti].data_mut()[j] = base + delta;
                        work.forward_from(&trace, li, Some(unit))
                    };
                    let plus = at(step)?;
                    let minus = at(-step)?;
                    Ok(loss_difference(loss, (&plus.0, &plus.1), (&minus.0, &minus.1), target)? / (2.0 * step))
                };
                let d1 = central(h)?;
                let d2 = central(h / 2.0)?;
                let d4 = central(h / 4.0)?;
                work.layers_mut()[li].tensors_mut()[ti].data_mut()[j] = base;
                // two Richardson levels: O(h^6)
                let r1 = (4.0 * d2 - d1) / 3.0;
                let r2 = (4.0 * d4 - d2) / 3.0;
                let numeric = (16.0 * r2 - r1) / 15.0;
                let analytic = grads.layers()[li].tensors()[ti].data()[j];
                let rel = relative_error(analytic, numeric);
                report.checked += 1;
                let entry = || GradCheckEntry { layer: li, tensor: names[ti], index: j, analytic, numeric, rel_error: rel };
                if rel > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = rel;
                    report.worst = Some(entry());
                }
                if !(rel <= tol) {
                    report.violations.push(entry());
                }
            }
        }
    }
    Ok(report)
}

/// Output unit whose value depends on entry `j` of the layer's `ti`-th
/// parameter tensor.
fn owner(layer: &Layer, ti: usize, j: usize) -> usize {
    match layer {
        Layer::SelfGop { params, .. } => {
            let (n, m) = (params.outputs(), params.inputs());
            if ti == 0 {
                (j / m) % n
            } else {
                j % n
            }
        }
        Layer::Operational(p) | Layer::TransposedOperational(p) => match ti {
            0 => j / (p.c_in() * p.order() * p.kernel_size() * p.kernel_size()),
            1 => j / p.order(),
            _ => j / 2,
        },
        Layer::MaxPool2 => 0,
    }
}
