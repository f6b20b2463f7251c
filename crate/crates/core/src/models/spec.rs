use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, Result};
use crate::layers::{
    grouped_avgpool_softmax, Activation, InputShape, Layer, Network, OperationalLayerParams, SelfGopParams,
};
use crate::rng;
use crate::tensor::Tensor;
use crate::training::{init_operational, init_selfgop_from_denoiser, ClassGroups};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// op(h1) -> op(h2) -> op(out)
    Osen1,
    /// op(h1) -> maxpool -> op(h2) -> transposed op(h2) -> op(out)
    Osen2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelInput {
    /// Proxy image(s).
    Image { channels: usize, height: usize, width: usize },
    /// Raw measurements fed through a Self-GOP compressive front end that
    /// produces a single `height x width` map.
    Measurements { m: usize, height: usize, width: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// Per-pixel support probabilities.
    Segmentation,
    /// Support probabilities plus class probabilities from block-averaged
    /// logits.
    Hybrid { group_h: usize, group_w: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub order: usize,
    pub input: ModelInput,
    pub hidden: (usize, usize),
    pub kernel: usize,
    pub head: Head,
}

impl ModelSpec {
    /// 3x3 kernels and hidden widths 48 and 24, single-channel output.
    pub fn new(variant: Variant, order: usize, input: ModelInput) -> Self {
        Self { variant, order, input, hidden: (48, 24), kernel: 3, head: Head::Segmentation }
    }

    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    pub fn ncl(&self) -> bool {
        matches!(self.input, ModelInput::Measurements { .. })
    }

    /// Channels, height and width of the estimated support map.
    pub fn output_shape(&self) -> [usize; 3] {
        match self.input {
            ModelInput::Image { channels, height, width } => [channels, height, width],
            ModelInput::Measurements { height, width, .. } => [1, height, width],
        }
    }

    fn map_channels(&self) -> usize {
        self.output_shape()[0]
    }

    pub fn class_groups(&self) -> Result<Option<ClassGroups>> {
        match self.head {
            Head::Segmentation => Ok(None),
            Head::Hybrid { group_h, group_w } => {
                let [c, h, w] = self.output_shape();
                if c != 1 {
                    return Err(arg_err!("class head needs a single-channel map, got {}", c));
                }
                ClassGroups::new(h, w, group_h, group_w).map(Some)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(arg_err!("Taylor order must be at least 1"));
        }
        if self.kernel % 2 == 0 {
            return Err(arg_err!("kernel size must be odd"));
        }
        if self.hidden.0 == 0 || self.hidden.1 == 0 {
            return Err(arg_err!("hidden widths must be positive"));
        }
        let [c, h, w] = self.output_shape();
        if c == 0 || h == 0 || w == 0 {
            return Err(arg_err!("empty input shape"));
        }
        if self.variant == Variant::Osen2 && (h % 2 != 0 || w % 2 != 0) {
            return Err(arg_err!("OSEN2 needs even extents, got {}x{}", h, w));
        }
        if let ModelInput::Measurements { m, .. } = self.input {
            if m == 0 || m >= h * w {
                return Err(arg_err!("compressive front end needs 0 < m < n, got m = {}, n = {}", m, h * w));
            }
        }
        self.class_groups()?;
        Ok(())
    }
}

/// Closed-form parameter count: `f^2 Q C_in C_out + Q C_out + 2 C_out`
/// per operational layer plus `Q n m + Q n` for the Self-GOP front end.
pub fn param_count(spec: &ModelSpec) -> usize {
    let (q, f2) = (spec.order, spec.kernel * spec.kernel);
    let op = |ci: usize, co: usize| f2 * q * ci * co + q * co + 2 * co;
    let (h1, h2) = spec.hidden;
    let c = spec.map_channels();
    let mut total = op(c, h1) + op(h1, h2) + op(h2, c);
    if spec.variant == Variant::Osen2 {
        total += op(h2, h2);
    }
    if let ModelInput::Measurements { m, height, width } = spec.input {
        let n = height * width;
        total += q * n * m + q * n;
    }
    total
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub network: Network,
    /// Multiplies every raw input before the forward pass.
    pub input_scale: f64,
}

impl ModelParams {
    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }

    pub fn scaled(&self, x: &Tensor) -> Tensor {
        x.scale(self.input_scale)
    }
}

fn operational_layers(spec: &ModelSpec, mut make: impl FnMut(usize, usize, Activation) -> Result<OperationalLayerParams>) -> Result<Vec<Layer>> {
    let (h1, h2) = spec.hidden;
    let c = spec.map_channels();
    let mut layers = vec![Layer::Operational(make(c, h1, Activation::Tanh)?)];
    if spec.variant == Variant::Osen2 {
        layers.push(Layer::MaxPool2);
    }
    layers.push(Layer::Operational(make(h1, h2, Activation::Tanh)?));
    if spec.variant == Variant::Osen2 {
        layers.push(Layer::TransposedOperational(make(h2, h2, Activation::Tanh)?));
    }
    layers.push(Layer::Operational(make(h2, c, Activation::Sigmoid)?));
    Ok(layers)
}

fn assemble(spec: &ModelSpec, front: Option<SelfGopParams>, layers: Vec<Layer>) -> Result<Network> {
    match spec.input {
        ModelInput::Image { channels, height, width } => {
            Network::new(InputShape::Image { channels, height, width }, layers)
        }
        ModelInput::Measurements { m, height, width } => {
            let params = front.ok_or_else(|| arg_err!("measurement input needs a front end"))?;
            let mut all = vec![Layer::SelfGop { params, height, width }];
            all.extend(layers);
            Network::new(InputShape::Vector(m), all)
        }
    }
}

/// Architecture with every parameter zero and unit input scale.
pub fn build_structure(spec: &ModelSpec) -> Result<ModelParams> {
    spec.validate()?;
    let (q, f) = (spec.order, spec.kernel);
    let layers = operational_layers(spec, |ci, co, act| OperationalLayerParams::zeros(ci, co, q, f, act))?;
    let front = match spec.input {
        ModelInput::Measurements { m, height, width } => Some(SelfGopParams::zeros(m, height * width, q, Activation::None)?),
        ModelInput::Image { .. } => None,
    };
    Ok(ModelParams { spec: *spec, network: assemble(spec, front, layers)?, input_scale: 1.0 })
}

/// Randomly initialised model. A measurement-input model needs the
/// `n x m` denoiser, which becomes the first-order Self-GOP weights so the
/// untrained front end reproduces the linear proxy.
pub fn build(spec: &ModelSpec, seed: u64, denoiser: Option<&Tensor>) -> Result<ModelParams> {
    spec.validate()?;
    let (q, f) = (spec.order, spec.kernel);
    let mut index = 0u64;
    let layers = operational_layers(spec, |ci, co, act| {
        index += 1;
        init_operational(ci, co, q, f, act, &mut rng::stream(seed, rng::purpose::INIT, index))
    })?;
    let front = match spec.input {
        ModelInput::Measurements { m, height, width } => {
            let b = denoiser.ok_or_else(|| arg_err!("compressive model needs the denoiser for initialisation"))?;
            if b.shape() != [height * width, m] {
                return Err(shape_err!("denoiser is {:?}, expected [{}, {}]", b.shape(), height * width, m));
            }
            Some(init_selfgop_from_denoiser(b, q, Activation::None)?)
        }
        ModelInput::Image { .. } => None,
    };
    Ok(ModelParams { spec: *spec, network: assemble(spec, front, layers)?, input_scale: 1.0 })
}

/// Reciprocal of the 99th percentile of `|x|` over all inputs (1 when the
/// inputs are all zero).
pub fn input_scale_from<'a>(inputs: impl IntoIterator<Item = &'a Tensor>) -> f64 {
    let mut mags: Vec<f64> = inputs.into_iter().flat_map(|t| t.data().iter().map(|v| v.abs())).collect();
    if mags.is_empty() {
        return 1.0;
    }
    mags.sort_by(f64::total_cmp);
    let idx = ((mags.len() - 1) as f64 * 0.99).round() as usize;
    let p = mags[idx];
    if p > 0.0 {
        1.0 / p
    } else {
        1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    /// Support probabilities, `C x H x W`.
    pub probs: Tensor,
    pub classes: Option<Tensor>,
}

/// Forward pass on a raw (unscaled) input.
pub fn infer(params: &ModelParams, input: &Tensor) -> Result<Inference> {
    let trace = params.network.trace(&params.scaled(input))?;
    let classes = match params.spec.class_groups()? {
        Some(g) => {
            let [_, h, w] = params.spec.output_shape();
            let logits = trace.logits().clone().reshape(&[h, w])?;
            Some(grouped_avgpool_softmax(&logits, g.group())?)
        }
        None => None,
    };
    Ok(Inference { probs: trace.output().clone(), classes })
}

/// `1` where `p > tau`.
pub fn binarize(p: &Tensor, tau: f64) -> Tensor {
    p.map(|v| if v > tau { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::selfgop_forward;
    use crate::sparse::{gaussian_measurement_matrix, proxy, ProxyKind, SensingProblem, Sparsifier};
    use rand::Rng;

    fn img(c: usize, h: usize, w: usize) -> ModelInput {
        ModelInput::Image { channels: c, height: h, width: w }
    }

    fn ncl(m: usize) -> ModelInput {
        ModelInput::Measurements { m, height: 28, width: 28 }
    }

    #[test]
    fn published_parameter_counts() {
        let cases = [
            (Variant::Osen1, 1, img(1, 28, 28), 11_235),
            (Variant::Osen1, 3, img(1, 28, 28), 33_413),
            (Variant::Osen1, 5, img(1, 28, 28), 55_591),
            (Variant::Osen2, 1, img(1, 28, 28), 16_491),
            (Variant::Osen2, 3, img(1, 28, 28), 49_085),
            (Variant::Osen2, 5, img(1, 28, 28), 81_679),
            (Variant::Osen1, 1, ncl(39), 42_595),
            (Variant::Osen1, 3, ncl(39), 127_493),
            (Variant::Osen1, 5, ncl(39), 212_391),
            (Variant::Osen2, 1, ncl(39), 47_851),
            (Variant::Osen2, 3, ncl(39), 143_165),
            (Variant::Osen2, 5, ncl(39), 238_479),
        ];
        for (v, q, input, expect) in cases {
            let spec = ModelSpec::new(v, q, input);
            assert_eq!(param_count(&spec), expect, "{:?} Q={} {:?}", v, q, input);
            assert_eq!(build_structure(&spec).unwrap().param_count(), expect);
        }
    }

    #[test]
    fn count_identities() {
        for q in 1..=5 {
            let o1 = param_count(&ModelSpec::new(Variant::Osen1, q, img(1, 28, 28)));
            let o2 = param_count(&ModelSpec::new(Variant::Osen2, q, img(1, 28, 28)));
            assert_eq!(o2 - o1, 9 * q * 24 * 24 + 24 * q + 48);
            let n1 = param_count(&ModelSpec::new(Variant::Osen1, q, ncl(39)));
            assert_eq!(n1 - o1, q * 784 * 40);
        }
        let single = OperationalLayerParams::zeros(1, 1, 2, 3, Activation::None).unwrap();
        assert_eq!(single.param_count(), 22);
    }

    #[test]
    fn build_is_seeded() {
        let spec = ModelSpec::new(Variant::Osen2, 2, img(1, 8, 8));
        assert_eq!(build(&spec, 3, None).unwrap(), build(&spec, 3, None).unwrap());
        assert_ne!(build(&spec, 3, None).unwrap(), build(&spec, 4, None).unwrap());
        assert!(build(&ModelSpec::new(Variant::Osen2, 2, img(1, 7, 8)), 1, None).is_err());
        assert!(build(&ModelSpec::new(Variant::Osen1, 1, ncl(39)), 1, None).is_err());
    }

    #[test]
    fn untrained_front_end_is_the_proxy() {
        let d = gaussian_measurement_matrix(39, 784, 1).unwrap();
        let mut problem = SensingProblem::new(d, Sparsifier::Identity).unwrap();
        let b = problem.prepare(ProxyKind::Lmmse(0.1)).unwrap().clone();
        let params = build(&ModelSpec::new(Variant::Osen1, 3, ncl(39)), 2, Some(&b)).unwrap();
        let Layer::SelfGop { params: front, .. } = &params.network.layers()[0] else { panic!() };
        let mut g = rng::stream(5, rng::purpose::MISC, 60);
        let y: Vec<f64> = (0..39).map(|_| g.gen_range(-1.0..1.0)).collect();
        let out = selfgop_forward(&Tensor::vector(y.clone()), front).unwrap();
        let px = proxy(&problem, &y, ProxyKind::Lmmse(0.1)).unwrap();
        for (a, b) in out.data().iter().zip(px.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_model_outputs_half() {
        let p = build_structure(&ModelSpec::new(Variant::Osen1, 2, img(1, 6, 6))).unwrap();
        let r = infer(&p, &Tensor::zeros(&[1, 6, 6])).unwrap();
        assert!(r.probs.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn outputs_are_probabilities() {
        let spec = ModelSpec::new(Variant::Osen1, 3, img(1, 4, 12)).with_head(Head::Hybrid { group_h: 2, group_w: 4 });
        let p = build(&spec, 9, None).unwrap();
        let mut g = rng::stream(1, rng::purpose::MISC, 61);
        let x = Tensor::from_fn(&[1, 4, 12], |_| g.gen_range(-2.0..2.0));
        let r = infer(&p, &x).unwrap();
        assert!(r.probs.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let c = r.classes.unwrap();
        assert_eq!(c.len(), 6);
        assert!((c.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binarize_is_strict() {
        let p = Tensor::vector(alloc::vec![0.49, 0.51, 0.5, 0.0]);
        assert_eq!(binarize(&p, 0.5).data(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(binarize(&p, 0.0).data(), &[1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn percentile_scale() {
        let xs: Vec<Tensor> = (0..10).map(|i| Tensor::from_fn(&[10], |j| (i * 10 + j) as f64 + 1.0)).collect();
        assert_eq!(input_scale_from(&xs), 1.0 / 99.0);
        assert_eq!(input_scale_from(&[Tensor::zeros(&[3])]), 1.0);
    }
}
