use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, Result};
use crate::layers::{
    maxpool2, maxpool2_backward, upsample_zero, MaxPoolIndices, OperationalLayerParams, OperationalScratch,
    SelfGopParams,
};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputShape {
    /// Raw measurement vector of length `m`.
    Vector(usize),
    Image { channels: usize, height: usize, width: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// Dense Self-GOP map whose `n = height * width` outputs are read as a
    /// single-channel image.
    SelfGop { params: SelfGopParams, height: usize, width: usize },
    Operational(OperationalLayerParams),
    /// Stride-2 transposed operational layer.
    TransposedOperational(OperationalLayerParams),
    MaxPool2,
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match self {
            Layer::SelfGop { params, .. } => params.param_count(),
            Layer::Operational(p) | Layer::TransposedOperational(p) => p.param_count(),
            Layer::MaxPool2 => 0,
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            Layer::SelfGop { params, .. } => vec![&params.weights, &params.biases],
            Layer::Operational(p) | Layer::TransposedOperational(p) => vec![&p.weights, &p.biases, &p.shifts],
            Layer::MaxPool2 => Vec::new(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::SelfGop { params, .. } => vec![&mut params.weights, &mut params.biases],
            Layer::Operational(p) | Layer::TransposedOperational(p) => {
                vec![&mut p.weights, &mut p.biases, &mut p.shifts]
            }
            Layer::MaxPool2 => Vec::new(),
        }
    }

    fn zeroed(&self) -> Layer {
        let mut l = self.clone();
        for t in l.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        l
    }
}

/// A feed-forward chain of layers with statically checked shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input: InputShape,
    layers: Vec<Layer>,
    /// `[C, H, W]` after each layer.
    shapes: Vec<[usize; 3]>,
}

/// Cached intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    /// Input seen by each layer (zero-upsampled for transposed layers).
    pub(crate) inputs: Vec<Tensor>,
    pub(crate) pre: Vec<Option<Tensor>>,
    pub(crate) outputs: Vec<Tensor>,
    pub(crate) pool: Vec<Option<MaxPoolIndices>>,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        self.outputs.last().expect("network has layers")
    }

    /// Output of layer `i`.
    pub fn layer_output(&self, i: usize) -> Option<&Tensor> {
        self.outputs.get(i)
    }

    /// Pre-activation of the last layer.
    pub fn logits(&self) -> &Tensor {
        self.pre.last().and_then(|p| p.as_ref()).expect("last layer has parameters")
    }
}

impl Network {
    pub fn new(input: InputShape, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(arg_err!("network needs at least one layer"));
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut cur: Option<[usize; 3]> = match input {
            InputShape::Vector(_) => None,
            InputShape::Image { channels, height, width } => Some([channels, height, width]),
        };
        for (i, layer) in layers.iter().enumerate() {
            let next = match (layer, cur) {
                (Layer::SelfGop { params, height, width }, None) => {
                    params.validate()?;
                    let InputShape::Vector(m) = input else { unreachable!() };
                    if i != 0 || params.inputs() != m || params.outputs() != height * width {
                        return Err(shape_err!("Self-GOP layer {} does not map {} inputs onto {}x{}", i, m, height, width));
                    }
                    [1, *height, *width]
                }
                (Layer::SelfGop { .. }, Some(_)) => return Err(arg_err!("Self-GOP layer {} must come first", i)),
                (_, None) => return Err(arg_err!("vector input must feed a Self-GOP layer")),
                (Layer::Operational(p), Some([c, h, w])) => {
                    p.validate()?;
                    if p.c_in() != c {
                        return Err(shape_err!("layer {} expects {} channels, previous gives {}", i, p.c_in(), c));
                    }
                    [p.c_out(), h, w]
                }
                (Layer::TransposedOperational(p), Some([c, h, w])) => {
                    p.validate()?;
                    if p.c_in() != c {
                        return Err(shape_err!("layer {} expects {} channels, previous gives {}", i, p.c_in(), c));
                    }
                    [p.c_out(), 2 * h, 2 * w]
                }
                (Layer::MaxPool2, Some([c, h, w])) => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(arg_err!("max pooling layer {} sees odd extents {}x{}", i, h, w));
                    }
                    [c, h / 2, w / 2]
                }
            };
            shapes.push(next);
            cur = Some(next);
        }
        if matches!(layers.last(), Some(Layer::MaxPool2)) {
            return Err(arg_err!("network must end in a parametric layer"));
        }
        Ok(Self { input, layers, shapes })
    }

    pub fn input_shape(&self) -> InputShape {
        self.input
    }

    pub fn output_shape(&self) -> [usize; 3] {
        *self.shapes.last().expect("non-empty")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Spatial extents `(H, W)` of the map entering layer `i`.
    pub fn layer_input_extent(&self, i: usize) -> Option<(usize, usize)> {
        if i == 0 {
            return match self.input {
                InputShape::Vector(_) => None,
                InputShape::Image { height, width, .. } => Some((height, width)),
            };
        }
        let [_, h, w] = self.shapes[i - 1];
        match self.layers[i] {
            Layer::TransposedOperational(_) => Some((2 * h, 2 * w)),
            _ => Some((h, w)),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::tensors).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::tensors_mut).collect()
    }

    /// Same architecture with every parameter set to zero; used as a
    /// gradient accumulator.
    pub fn zeros_like(&self) -> Network {
        Network { input: self.input, layers: self.layers.iter().map(Layer::zeroed).collect(), shapes: self.shapes.clone() }
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let ok = match self.input {
            InputShape::Vector(m) => x.shape() == [m],
            InputShape::Image { channels, height, width } => x.shape() == [channels, height, width],
        };
        if ok {
            Ok(())
        } else {
            Err(shape_err!("network input {:?} does not match {:?}", x.shape(), self.input))
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.trace(x)?.outputs.pop().expect("non-empty"))
    }

    pub fn trace(&self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        x.ensure_finite("network input")?;
        let n = self.layers.len();
        let mut t = Trace {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            outputs: Vec::with_capacity(n),
            pool: Vec::with_capacity(n),
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { &t.outputs[i - 1] };
            let (inp, pre, out, idx) = match layer {
                Layer::SelfGop { params, height, width } => {
                    let z = Tensor::new(&[1, *height, *width], params.preactivation(input.data())?)?;
                    let act = params.activation;
                    let y = z.map(|v| act.apply(v));
                    (input.clone(), Some(z), y, None)
                }
                Layer::Operational(p) => {
                    let z = p.preactivation(input)?;
                    let act = p.activation;
                    let y = z.map(|v| act.apply(v));
                    (input.clone(), Some(z), y, None)
                }
                Layer::TransposedOperational(p) => {
                    let u = upsample_zero(input, 2)?;
                    let z = p.preactivation(&u)?;
                    let act = p.activation;
                    let y = z.map(|v| act.apply(v));
                    (u, Some(z), y, None)
                }
                Layer::MaxPool2 => {
                    let (y, idx) = maxpool2(input)?;
                    (input.clone(), None, y, Some(idx))
                }
            };
            out.ensure_finite(&format!("layer {} output", i))?;
            t.inputs.push(inp);
            t.pre.push(pre);
            t.outputs.push(out);
            t.pool.push(idx);
        }
        Ok(t)
    }

    /// Reverse pass starting from the gradient with respect to the last
    /// layer's pre-activation. Parameter gradients are added into `grads`;
    /// the gradient with respect to the network input is returned.
    pub(crate) fn backward(&self, t: &Trace, d_logits: &[f64], grads: &mut Network) -> Result<Vec<f64>> {
        let n = self.layers.len();
        let mut g_out: Vec<f64> = Vec::new();
        for i in (0..n).rev() {
            let dz: Vec<f64> = if i == n - 1 {
                d_logits.to_vec()
            } else {
                match &self.layers[i] {
                    Layer::MaxPool2 => Vec::new(),
                    Layer::SelfGop { params, .. } => deriv(&g_out, &t.outputs[i], params.activation),
                    Layer::Operational(p) | Layer::TransposedOperational(p) => deriv(&g_out, &t.outputs[i], p.activation),
                }
            };
            if dz.iter().any(|v| !v.is_finite()) {
                return Err(crate::Error::NonFinite(format!("layer {} gradient", i)));
            }
            g_out = match (&self.layers[i], &mut grads.layers[i]) {
                (Layer::SelfGop { params, .. }, Layer::SelfGop { params: gp, .. }) => params.backward(t.inputs[i].data(), &dz, gp),
                (Layer::Operational(p), Layer::Operational(gp)) => op_backward(p, &t.inputs[i], &dz, gp)?,
                (Layer::TransposedOperational(p), Layer::TransposedOperational(gp)) => {
                    let du = op_backward(p, &t.inputs[i], &dz, gp)?;
                    let [c, h, w] = if i == 0 { self.image_dims() } else { self.shapes[i - 1] };
                    let (hh, ww) = (2 * h, 2 * w);
                    let mut dx = vec![0.0; c * h * w];
                    for ch in 0..c {
                        for r in 0..h {
                            for col in 0..w {
                                dx[(ch * h + r) * w + col] = du[(ch * hh + 2 * r) * ww + 2 * col];
                            }
                        }
                    }
                    dx
                }
                (Layer::MaxPool2, Layer::MaxPool2) => {
                    let idx = t.pool[i].as_ref().expect("pool indices cached");
                    maxpool2_backward(&g_out, idx, t.inputs[i].len())
                }
                _ => return Err(arg_err!("gradient accumulator does not match layer {}", i)),
            };
        }
        Ok(g_out)
    }

    fn image_dims(&self) -> [usize; 3] {
        match self.input {
            InputShape::Image { channels, height, width } => [channels, height, width],
            InputShape::Vector(_) => [0, 0, 0],
        }
    }

    /// Re-evaluates layer `layer` (only `unit` when given) from the cached
    /// trace and propagates through the rest of the network. Returns the
    /// final pre-activation and output.
    pub(crate) fn forward_from(&self, t: &Trace, layer: usize, unit: Option<usize>) -> Result<(Tensor, Tensor)> {
        let mut pre = t.pre[layer].clone();
        let mut out = t.outputs[layer].clone();
        let input = &t.inputs[layer];
        match &self.layers[layer] {
            Layer::SelfGop { params, .. } => {
                let powers = params.powers(input.data());
                let z = pre.as_mut().expect("cached");
                let units: Vec<usize> = match unit {
                    Some(u) => vec![u],
                    None => (0..params.outputs()).collect(),
                };
                for u in units {
                    z.data_mut()[u] = params.unit(&powers, u);
                    out.data_mut()[u] = params.activation.apply(z.data()[u]);
                }
            }
            Layer::Operational(p) | Layer::TransposedOperational(p) => {
                let (_, h, w) = input.dims3()?;
                let z = pre.as_mut().expect("cached");
                let mut s = OperationalScratch::new(p, h, w);
                let units: Vec<usize> = match unit {
                    Some(u) => vec![u],
                    None => (0..p.c_out()).collect(),
                };
                for u in units {
                    let zk = &mut z.data_mut()[u * h * w..(u + 1) * h * w];
                    p.forward_unit(input.data(), h, w, u, &mut s, zk);
                    let act = p.activation;
                    for (o, v) in out.data_mut()[u * h * w..(u + 1) * h * w].iter_mut().zip(zk.iter()) {
                        *o = act.apply(*v);
                    }
                }
            }
            Layer::MaxPool2 => {
                out = maxpool2(input)?.0;
            }
        }
        let mut last_pre = pre;
        for l in &self.layers[layer + 1..] {
            let (z, y) = match l {
                Layer::SelfGop { .. } => return Err(arg_err!("Self-GOP layer must come first")),
                Layer::Operational(p) => {
                    let z = p.preactivation(&out)?;
                    let act = p.activation;
                    let y = z.map(|v| act.apply(v));
                    (Some(z), y)
                }
                Layer::TransposedOperational(p) => {
                    let z = p.preactivation(&upsample_zero(&out, 2)?)?;
                    let act = p.activation;
                    let y = z.map(|v| act.apply(v));
                    (Some(z), y)
                }
                Layer::MaxPool2 => (None, maxpool2(&out)?.0),
            };
            last_pre = z;
            out = y;
        }
        Ok((last_pre.expect("last layer has parameters"), out))
    }
}

fn deriv(g: &[f64], y: &Tensor, act: crate::layers::Activation) -> Vec<f64> {
    g.iter().zip(y.data()).map(|(g, y)| g * act.derivative(*y)).collect()
}

fn op_backward(p: &OperationalLayerParams, x: &Tensor, dz: &[f64], gp: &mut OperationalLayerParams) -> Result<Vec<f64>> {
    let (_, h, w) = x.dims3()?;
    let mut dx = vec![0.0; x.len()];
    let mut s = OperationalScratch::new(p, h, w);
    for k in 0..p.c_out() {
        p.backward_unit(x.data(), h, w, k, &dz[k * h * w..(k + 1) * h * w], &mut s, Some(&mut dx), gp);
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::Activation;
    use crate::rng;
    use rand::Rng;

    fn random(shape: &[usize], g: &mut rng::Rng, s: f64) -> Tensor {
        Tensor::from_fn(shape, |_| g.gen_range(-s..s))
    }

    fn op(c_in: usize, c_out: usize, q: usize, act: Activation, g: &mut rng::Rng) -> OperationalLayerParams {
        OperationalLayerParams::from_parts(
            random(&[c_out, c_in, q, 3, 3], g, 0.4),
            random(&[c_out, q], g, 0.2),
            random(&[c_out, 2], g, 1.2),
            act,
        )
        .unwrap()
    }

    fn small_net(g: &mut rng::Rng) -> Network {
        Network::new(
            InputShape::Image { channels: 1, height: 6, width: 6 },
            vec![
                Layer::Operational(op(1, 3, 2, Activation::Tanh, g)),
                Layer::MaxPool2,
                Layer::Operational(op(3, 2, 2, Activation::Tanh, g)),
                Layer::TransposedOperational(op(2, 2, 2, Activation::Tanh, g)),
                Layer::Operational(op(2, 1, 2, Activation::Sigmoid, g)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn shapes_chain_through_pool_and_transpose() {
        let mut g = rng::stream(1, rng::purpose::MISC, 20);
        let net = small_net(&mut g);
        assert_eq!(net.output_shape(), [1, 6, 6]);
        assert_eq!(net.layer_input_extent(2), Some((3, 3)));
        assert_eq!(net.layer_input_extent(3), Some((6, 6)));
        let y = net.forward(&random(&[1, 6, 6], &mut g, 1.0)).unwrap();
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn rejects_bad_chains() {
        let mut g = rng::stream(2, rng::purpose::MISC, 20);
        let img = InputShape::Image { channels: 1, height: 4, width: 4 };
        assert!(Network::new(img, vec![Layer::Operational(op(2, 1, 1, Activation::None, &mut g))]).is_err());
        assert!(Network::new(img, vec![Layer::Operational(op(1, 1, 1, Activation::None, &mut g)), Layer::MaxPool2]).is_err());
        let odd = InputShape::Image { channels: 1, height: 5, width: 4 };
        assert!(Network::new(odd, vec![Layer::MaxPool2, Layer::Operational(op(1, 1, 1, Activation::None, &mut g))]).is_err());
        let sg = SelfGopParams::zeros(3, 16, 1, Activation::None).unwrap();
        assert!(Network::new(InputShape::Vector(3), vec![Layer::SelfGop { params: sg.clone(), height: 4, width: 3 }]).is_err());
        assert!(Network::new(InputShape::Vector(3), vec![Layer::SelfGop { params: sg, height: 4, width: 4 }]).is_ok());
    }

    #[test]
    fn partial_recompute_matches_full_forward() {
        let mut g = rng::stream(3, rng::purpose::MISC, 20);
        let mut net = small_net(&mut g);
        let x = random(&[1, 6, 6], &mut g, 1.0);
        let t = net.trace(&x).unwrap();
        if let Layer::Operational(p) = &mut net.layers_mut()[2] {
            p.weights.data_mut()[20] += 0.1;
        }
        let (_, y) = net.forward_from(&t, 2, Some(0)).unwrap();
        assert_eq!(y, net.forward(&x).unwrap());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut g = rng::stream(4, rng::purpose::MISC, 20);
        let net = small_net(&mut g);
        let x = random(&[1, 6, 6], &mut g, 1.0);
        let target = random(&[1, 6, 6], &mut g, 1.0);
        let loss = |n: &Network, x: &Tensor| -> f64 {
            let t = n.trace(x).unwrap();
            t.logits().data().iter().zip(target.data()).map(|(z, c)| z * c).sum()
        };
        let t = net.trace(&x).unwrap();
        let mut grads = net.zeros_like();
        let dx = net.backward(&t, target.data(), &mut grads).unwrap();
        let h = 1e-6;
        let mut checked = 0;
        for (ti, gt) in grads.tensors().iter().enumerate() {
            for j in (0..gt.len()).step_by(7) {
                let mut plus = net.clone();
                plus.tensors_mut()[ti].data_mut()[j] += h;
                let mut minus = net.clone();
                minus.tensors_mut()[ti].data_mut()[j] -= h;
                let num = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h);
                let a = gt.data()[j];
                assert!((a - num).abs() <= 1e-6 * (1.0 + a.abs()), "tensor {} entry {}: {} vs {}", ti, j, a, num);
                checked += 1;
            }
        }
        assert!(checked > 20);
        for j in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[j] += h;
            let mut xm = x.clone();
            xm.data_mut()[j] -= h;
            let num = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
            assert!((dx[j] - num).abs() <= 1e-6 * (1.0 + num.abs()));
        }
    }

    #[test]
    fn selfgop_front_end_backward() {
        let mut g = rng::stream(5, rng::purpose::MISC, 20);
        let sg = SelfGopParams::from_parts(random(&[2, 16, 5], &mut g, 0.5), random(&[2, 16], &mut g, 0.2), Activation::Tanh).unwrap();
        let net = Network::new(
            InputShape::Vector(5),
            vec![Layer::SelfGop { params: sg, height: 4, width: 4 }, Layer::Operational(op(1, 1, 2, Activation::Sigmoid, &mut g))],
        )
        .unwrap();
        let x = random(&[5], &mut g, 1.0);
        let t = net.trace(&x).unwrap();
        let ones = vec![1.0; 16];
        let mut grads = net.zeros_like();
        net.backward(&t, &ones, &mut grads).unwrap();
        let h = 1e-6;
        let f = |n: &Network| -> f64 { n.trace(&x).unwrap().logits().data().iter().sum() };
        for (ti, gt) in grads.tensors().iter().enumerate() {
            for j in 0..gt.len() {
                let mut p = net.clone();
                p.tensors_mut()[ti].data_mut()[j] += h;
                let mut m = net.clone();
                m.tensors_mut()[ti].data_mut()[j] -= h;
                let num = (f(&p) - f(&m)) / (2.0 * h);
                assert!((gt.data()[j] - num).abs() <= 1e-6 * (1.0 + num.abs()));
            }
        }
    }
}
