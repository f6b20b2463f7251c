use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, Error, Result};
use crate::layers::{avgpool_groups, avgpool_groups_backward, softmax, Activation, Layer, Network, Trace};
use crate::tensor::Tensor;

const PROB_FLOOR: f64 = 1e-12;

/// Class layout of a 2-D support map: class `i` owns the `i`-th
/// `group_h x group_w` block in row-major block order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassGroups {
    pub height: usize,
    pub width: usize,
    pub group_h: usize,
    pub group_w: usize,
}

impl ClassGroups {
    pub fn new(height: usize, width: usize, group_h: usize, group_w: usize) -> Result<Self> {
        if group_h == 0 || group_w == 0 || height % group_h != 0 || width % group_w != 0 {
            return Err(arg_err!("{}x{} blocks do not tile a {}x{} map", group_h, group_w, height, width));
        }
        Ok(Self { height, width, group_h, group_w })
    }

    pub fn count(&self) -> usize {
        (self.height / self.group_h) * (self.width / self.group_w)
    }

    pub fn group(&self) -> (usize, usize) {
        (self.group_h, self.group_w)
    }

    /// Class owning flat map position `idx`.
    pub fn class_of(&self, idx: usize) -> usize {
        let (r, c) = (idx / self.width, idx % self.width);
        (r / self.group_h) * (self.width / self.group_w) + c / self.group_w
    }

    /// Flat positions of every class, each list in row-major order.
    pub fn indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::with_capacity(self.group_h * self.group_w); self.count()];
        for idx in 0..self.height * self.width {
            out[self.class_of(idx)].push(idx);
        }
        out
    }

    /// Support mask covering exactly the block of `class`.
    pub fn block_mask(&self, class: usize) -> Tensor {
        Tensor::from_fn(&[self.height, self.width], |i| if self.class_of(i) == class { 1.0 } else { 0.0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    MseMask,
    GroupL2,
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub lambda_g: f64,
    pub lambda_c: f64,
    pub class_groups: Option<ClassGroups>,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self { kind: LossKind::MseMask, lambda_g: 0.01, lambda_c: 0.1, class_groups: None }
    }
}

impl LossSpec {
    pub fn mse() -> Self {
        Self::default()
    }

    pub fn group_l2(groups: ClassGroups, lambda_g: f64) -> Self {
        Self { kind: LossKind::GroupL2, lambda_g, class_groups: Some(groups), ..Self::default() }
    }

    pub fn hybrid(groups: ClassGroups, lambda_c: f64) -> Self {
        Self { kind: LossKind::Hybrid, lambda_c, class_groups: Some(groups), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_g >= 0.0 && self.lambda_c >= 0.0) {
            return Err(arg_err!("loss weights must be non-negative"));
        }
        if self.kind != LossKind::MseMask && self.class_groups.is_none() {
            return Err(arg_err!("{:?} loss needs class groups", self.kind));
        }
        Ok(())
    }
}

/// Ground truth for one sample: support mask shaped like the network output
/// and, for the hybrid loss, the class label.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub mask: Tensor,
    pub class: Option<usize>,
}

impl Target {
    pub fn mask(mask: Tensor) -> Self {
        Self { mask, class: None }
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(shape_err!("lengths differ: {} vs {}", a.len(), b.len()));
    }
    Ok(())
}

/// Sum of squared differences.
pub fn loss_mse_mask(v_hat: &[f64], v: &[f64]) -> Result<f64> {
    check_len(v_hat, v)?;
    Ok(v_hat.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Squared error plus `lambda_g` times the sum of per-group l2 norms of
/// `v_hat`. `groups` must partition the index range.
pub fn loss_group_l2(v_hat: &[f64], v: &[f64], groups: &[Vec<usize>], lambda_g: f64) -> Result<f64> {
    let mse = loss_mse_mask(v_hat, v)?;
    let mut seen = vec![false; v_hat.len()];
    for &i in groups.iter().flatten() {
        if i >= seen.len() || seen[i] {
            return Err(arg_err!("groups do not partition {} indices", v_hat.len()));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(arg_err!("groups do not cover all {} indices", v_hat.len()));
    }
    let penalty: f64 = groups.iter().map(|g| libm::sqrt(g.iter().map(|&i| v_hat[i] * v_hat[i]).sum::<f64>())).sum();
    Ok(mse + lambda_g * penalty)
}

/// Squared error plus `lambda_c` times the cross-entropy of `c_hat`
/// against the one-hot `c`.
pub fn loss_hybrid(v_hat: &[f64], v: &[f64], c_hat: &[f64], c: &[f64], lambda_c: f64) -> Result<f64> {
    check_len(c_hat, c)?;
    let hot = c.iter().filter(|&&x| x == 1.0).count();
    if hot != 1 || c.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(arg_err!("class target is not one-hot"));
    }
    let ce: f64 = c.iter().zip(c_hat).filter(|(t, _)| **t == 1.0).map(|(_, p)| -libm::log(p.max(PROB_FLOOR))).sum();
    Ok(loss_mse_mask(v_hat, v)? + lambda_c * ce)
}

fn output_activation(net: &Network) -> Activation {
    match net.layers().last() {
        Some(Layer::Operational(p)) | Some(Layer::TransposedOperational(p)) => p.activation,
        Some(Layer::SelfGop { params, .. }) => params.activation,
        _ => Activation::None,
    }
}

/// Loss of one sample and its gradient with respect to the final
/// pre-activation.
fn loss_and_grad(spec: &LossSpec, act: Activation, logits: &Tensor, out: &Tensor, target: &Target, want_grad: bool) -> Result<(f64, Vec<f64>)> {
    let y = out.data();
    let v = target.mask.data();
    check_len(y, v)?;
    let mut value = loss_mse_mask(y, v)?;
    let mut dy: Vec<f64> = if want_grad { y.iter().zip(v).map(|(a, b)| 2.0 * (a - b)).collect() } else { Vec::new() };
    let mut dz_extra = Vec::new();
    match spec.kind {
        LossKind::MseMask => {}
        LossKind::GroupL2 => {
            let groups = spec.class_groups.ok_or_else(|| arg_err!("group loss needs class groups"))?;
            if groups.height * groups.width != y.len() {
                return Err(shape_err!("class groups cover {} positions, output has {}", groups.height * groups.width, y.len()));
            }
            for g in groups.indices() {
                let norm = libm::sqrt(g.iter().map(|&i| y[i] * y[i]).sum::<f64>());
                value += spec.lambda_g * norm;
                if want_grad && norm > 0.0 {
                    for &i in &g {
                        dy[i] += spec.lambda_g * y[i] / norm;
                    }
                }
            }
        }
        LossKind::Hybrid => {
            let groups = spec.class_groups.ok_or_else(|| arg_err!("hybrid loss needs class groups"))?;
            let (h, w) = (groups.height, groups.width);
            if h * w != y.len() {
                return Err(shape_err!("class groups cover {} positions, output has {}", h * w, y.len()));
            }
            let class = target.class.ok_or_else(|| arg_err!("hybrid loss needs a class label"))?;
            let p = softmax(&avgpool_groups(logits.data(), h, w, groups.group())?);
            if class >= p.len() {
                return Err(arg_err!("class {} out of range for {} classes", class, p.len()));
            }
            value += spec.lambda_c * -libm::log(p[class].max(PROB_FLOOR));
            if want_grad {
                let dp: Vec<f64> = p.iter().enumerate().map(|(i, pi)| spec.lambda_c * (pi - if i == class { 1.0 } else { 0.0 })).collect();
                dz_extra = avgpool_groups_backward(&dp, h, w, groups.group());
            }
        }
    }
    if !want_grad {
        return Ok((value, Vec::new()));
    }
    let mut dz: Vec<f64> = dy.iter().zip(y).map(|(g, yv)| g * act.derivative(*yv)).collect();
    for (a, b) in dz.iter_mut().zip(&dz_extra) {
        *a += b;
    }
    Ok((value, dz))
}

/// Loss of a single sample given the final pre-activation and output.
pub fn loss_value(spec: &LossSpec, logits: &Tensor, out: &Tensor, target: &Target) -> Result<f64> {
    Ok(loss_and_grad(spec, Activation::None, logits, out, target, false)?.0)
}

/// `loss(plus) - loss(minus)` with the squared-error part formed from
/// output differences, which keeps finite differences free of the
/// cancellation in the full sums.
pub(crate) fn loss_difference(spec: &LossSpec, plus: (&Tensor, &Tensor), minus: (&Tensor, &Tensor), target: &Target) -> Result<f64> {
    let v = target.mask.data();
    let (yp, ym) = (plus.1.data(), minus.1.data());
    check_len(yp, v)?;
    check_len(ym, v)?;
    let mse: f64 = yp.iter().zip(ym).zip(v).map(|((a, b), t)| (a - b) * (a + b - 2.0 * t)).sum();
    let extra = |z: &Tensor, y: &Tensor| -> Result<f64> { Ok(loss_value(spec, z, y, target)? - loss_mse_mask(y.data(), v)?) };
    let e = match spec.kind {
        LossKind::MseMask => 0.0,
        _ => extra(plus.0, plus.1)? - extra(minus.0, minus.1)?,
    };
    Ok(mse + e)
}

/// Loss of one traced sample and the gradient with respect to the last
/// layer's pre-activation.
pub fn evaluate(net: &Network, trace: &Trace, target: &Target, spec: &LossSpec) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    loss_and_grad(spec, output_activation(net), trace.logits(), trace.output(), target, true)
}

/// Batch-summed loss and exact gradients for every parameter.
pub fn backward(net: &Network, batch: &[(Tensor, Target)], spec: &LossSpec) -> Result<(f64, Network)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch".into()));
    }
    let mut grads = net.zeros_like();
    let mut total = 0.0;
    for (x, target) in batch {
        let trace = net.trace(x)?;
        let (value, dz) = evaluate(net, &trace, target, spec)?;
        total += value;
        net.backward(&trace, &dz, &mut grads)?;
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("batch loss".into()));
    }
    Ok((total, grads))
}
