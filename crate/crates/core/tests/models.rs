use osen_core::layers::{Layer, Trace};
use osen_core::models::{build, decode_params, encode_params, infer, train_model, Dataset, ModelInput, ModelSpec, Sample, TrainConfig, Variant};
use osen_core::numerics::conv2d_same;
use osen_core::rng;
use osen_core::sparse::{gaussian_measurement_matrix, proxy, ProxyKind, SensingProblem, Sparsifier};
use osen_core::training::{grad_check, LossSpec, Target};
use osen_core::Tensor;
use rand::Rng;

fn uniform(shape: &[usize], lo: f64, hi: f64, g: &mut rng::Rng) -> Tensor {
    Tensor::from_fn(shape, |_| g.gen_range(lo..hi))
}

fn plane(t: &Tensor, c: usize) -> Tensor {
    let (_, h, w) = t.dims3().unwrap();
    Tensor::new(&[h, w], t.data()[c * h * w..(c + 1) * h * w].to_vec()).unwrap()
}

/// Plain multi-channel convolutional layer built from single-plane correlations.
fn conv_layer(x: &Tensor, w: &Tensor, b: &Tensor, act: fn(f64) -> f64) -> Tensor {
    let (c_in, h, wd) = x.dims3().unwrap();
    let s = w.shape().to_vec();
    let (c_out, f) = (s[0], s[3]);
    let mut out = Vec::with_capacity(c_out * h * wd);
    for k in 0..c_out {
        let mut acc = Tensor::filled(&[h, wd], b.data()[k]);
        for c in 0..c_in {
            let start = (k * c_in + c) * f * f;
            let kern = Tensor::new(&[f, f], w.data()[start..start + f * f].to_vec()).unwrap();
            acc = acc.add(&conv2d_same(&plane(x, c), &kern).unwrap()).unwrap();
        }
        out.extend(acc.data().iter().map(|&v| act(v)));
    }
    Tensor::new(&[c_out, h, wd], out).unwrap()
}

#[test]
fn first_order_unshifted_model_is_a_convolutional_network() {
    let spec = ModelSpec::new(Variant::Osen1, 1, ModelInput::Image { channels: 2, height: 7, width: 5 });
    let params = build(&spec, 3, None).unwrap();
    let mut g = rng::stream(1, rng::purpose::MISC, 0);
    for _ in 0..10 {
        let x = uniform(&[2, 7, 5], -1.0, 1.0, &mut g);
        let mut reference = x.clone();
        for layer in params.network.layers() {
            let Layer::Operational(p) = layer else { panic!("OSEN1 is all operational") };
            assert!(p.shifts.data().iter().all(|&s| s == 0.0));
            let act = p.activation;
            reference = conv_layer(&reference, &p.weights, &p.biases, match act {
                osen_core::layers::Activation::Tanh => f64::tanh,
                osen_core::layers::Activation::Sigmoid => osen_core::layers::sigmoid,
                osen_core::layers::Activation::None => |v| v,
            });
        }
        let out = params.network.forward(&x).unwrap();
        let diff = out.sub(&reference).unwrap().max_abs();
        assert!(diff < 1e-12, "{}", diff);
    }
}

fn ncl_setup(q: usize) -> (SensingProblem, ModelSpec, Tensor) {
    let (m, h, w) = (5, 3, 4);
    let a = gaussian_measurement_matrix(m, h * w, 2).unwrap();
    let mut problem = SensingProblem::new(a, Sparsifier::Identity).unwrap();
    let b = problem.prepare(ProxyKind::Lmmse(0.1)).unwrap().clone();
    let mut spec = ModelSpec::new(Variant::Osen1, q, ModelInput::Measurements { m, height: h, width: w });
    spec.hidden = (3, 2);
    (problem, spec, b)
}

#[test]
fn untrained_ncl_front_end_reproduces_the_proxy() {
    let (problem, spec, b) = ncl_setup(3);
    let params = build(&spec, 1, Some(&b)).unwrap();
    let mut g = rng::stream(2, rng::purpose::MISC, 0);
    for _ in 0..5 {
        let y: Vec<f64> = (0..5).map(|_| g.gen_range(-1.0..1.0)).collect();
        let trace: Trace = params.network.trace(&Tensor::vector(y.clone())).unwrap();
        let expect = proxy(&problem, &y, ProxyKind::Lmmse(0.1)).unwrap();
        let got = trace.layer_output(0).unwrap();
        for (a, e) in got.data().iter().zip(expect.data()) {
            assert!((a - e).abs() < 1e-10);
        }
    }
}

#[test]
fn self_gop_front_end_gradients() {
    let (_, spec, b) = ncl_setup(3);
    let mut params = build(&spec, 4, Some(&b)).unwrap();
    // Move higher-order front-end weights off zero so every term contributes,
    // and keep shifts away from the integer grid.
    let mut g = rng::stream(3, rng::purpose::MISC, 0);
    {
        let mut t = params.network.tensors_mut();
        t[0].data_mut().iter_mut().for_each(|v| *v += g.gen_range(-0.2..0.2));
        t[1].data_mut().iter_mut().for_each(|v| *v = g.gen_range(-0.1..0.1));
        for k in [4, 7, 10] {
            t[k].data_mut().iter_mut().for_each(|v| *v = g.gen_range(0.1..0.9) * if g.gen::<bool>() { 1.0 } else { -1.0 });
        }
    }
    let y = uniform(&[5], -1.0, 1.0, &mut g);
    let target = Target::mask(Tensor::from_fn(&[1, 3, 4], |i| (i % 3 == 0) as u8 as f64));
    let report = grad_check(&params.network, &y, &target, &LossSpec::mse(), 2e-2, 1e-5).unwrap();
    assert!(report.passed(), "{:?}", report.worst);
}

#[test]
fn second_variant_gradients() {
    let mut spec = ModelSpec::new(Variant::Osen2, 2, ModelInput::Image { channels: 1, height: 4, width: 4 });
    spec.hidden = (3, 2);
    let mut params = build(&spec, 6, None).unwrap();
    let mut g = rng::stream(4, rng::purpose::MISC, 0);
    {
        let mut t = params.network.tensors_mut();
        // Operational tensors come in (weights, biases, shifts) triples.
        for k in (2..t.len()).step_by(3) {
            t[k].data_mut().iter_mut().for_each(|v| *v = g.gen_range(0.1..0.4) * if g.gen::<bool>() { 1.0 } else { -1.0 });
        }
    }
    let x = uniform(&[1, 4, 4], -1.0, 1.0, &mut g);
    let target = Target::mask(Tensor::from_fn(&[1, 4, 4], |i| (i % 5 == 1) as u8 as f64));
    let report = grad_check(&params.network, &x, &target, &LossSpec::mse(), 1e-2, 1e-5).unwrap();
    assert!(report.passed(), "{:?}", report.worst);
}

#[test]
fn trained_model_survives_serialisation() {
    let mut spec = ModelSpec::new(Variant::Osen1, 2, ModelInput::Image { channels: 1, height: 6, width: 6 });
    spec.hidden = (4, 3);
    let mut g = rng::stream(5, rng::purpose::SIGNALS, 0);
    let sample = |g: &mut rng::Rng| {
        let mask = Tensor::from_fn(&[1, 6, 6], |_| (g.gen::<f64>() < 0.25) as u8 as f64);
        let input = mask.map(|v| 3.0 * v - 0.5);
        Sample { input, target: Target::mask(mask) }
    };
    let data = Dataset { train: (0..8).map(|_| sample(&mut g)).collect(), val: (0..3).map(|_| sample(&mut g)).collect() };
    let cfg = TrainConfig { epochs: 3, batch_size: 4, ..TrainConfig::default() };
    let (trained, history) = train_model(build(&spec, 2, None).unwrap(), &data, &cfg).unwrap();
    assert_eq!(history.epochs.len(), 3);
    assert!(trained.input_scale > 0.0 && trained.input_scale != 1.0);
    let restored = decode_params(&encode_params(&trained).unwrap()).unwrap();
    let x = &data.val[0].input;
    assert_eq!(infer(&trained, x).unwrap(), infer(&restored, x).unwrap());
}
