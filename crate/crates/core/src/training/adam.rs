use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::layers::{Layer, Network};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    /// Leave every shift parameter at its current value.
    pub freeze_shifts: bool,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        Self::for_tensors(&net.tensors(), config)
    }

    pub fn for_tensors(params: &[&Tensor], config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            freeze_shifts: false,
            m: params.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: params.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update of `params`. Entries of `skip` that are
/// `true` leave the corresponding tensor and its moments untouched.
pub fn adam_update(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState, skip: &[bool]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != params.len() {
        return Err(shape_err!("optimiser tracks {} tensors, got {} params and {} grads", state.m.len(), params.len(), grads.len()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.len() != state.m[i].len() {
            return Err(shape_err!("parameter {} has shape {:?}, gradient {:?}", i, p.shape(), g.shape()));
        }
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(c.beta1, t);
    let bc2 = 1.0 - libm::pow(c.beta2, t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if skip.get(i).copied().unwrap_or(false) {
            continue;
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for ((w, &gv), (mi, vi)) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut().zip(v.iter_mut())) {
            *mi = c.beta1 * *mi + (1.0 - c.beta1) * gv;
            *vi = c.beta2 * *vi + (1.0 - c.beta2) * gv * gv;
            let mh = *mi / bc1;
            let vh = *vi / bc2;
            *w -= c.lr * mh / (libm::sqrt(vh) + c.eps);
        }
    }
    Ok(())
}

/// Adam step over every parameter of `net`, followed by clamping each
/// layer's shifts to half the smaller extent of the map it sees.
pub fn adam_step(net: &mut Network, grads: &Network, state: &mut AdamState) -> Result<()> {
    let mut skip = Vec::new();
    let mut limits = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        match layer {
            Layer::Operational(_) | Layer::TransposedOperational(_) => {
                skip.extend([false, false, state.freeze_shifts]);
                let (h, w) = net.layer_input_extent(i).expect("operational layers see images");
                limits.push((i, h.min(w) as f64 / 2.0));
            }
            Layer::SelfGop { .. } => skip.extend([false, false]),
            Layer::MaxPool2 => {}
        }
    }
    let g = grads.tensors();
    let mut p = net.tensors_mut();
    adam_update(&mut p, &g, state, &skip)?;
    drop(p);
    for (i, limit) in limits {
        if let Layer::Operational(p) | Layer::TransposedOperational(p) = &mut net.layers_mut()[i] {
            p.clamp_shifts(limit);
        }
    }
    Ok(())
}
