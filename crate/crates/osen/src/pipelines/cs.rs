//! Compressive Fourier imaging: semi-random sampling, an OSEN estimating the
//! gradient support from zero-filled gradients, and weighted TV.

use osen_core::models::{binarize, build, infer, param_count, train_model, Dataset, ModelInput, ModelParams, ModelSpec, Sample};
use osen_core::recon::{
    admm_tv, admm_weighted_tv, grad, gradient_support, measure_image, piecewise_constant_phantom, semi_random_mask, weights_from_prob,
    zero_filling, FourierSamplingMask,
};
use osen_core::sparse::{psnr_nmse, se_metrics, SeMetrics};
use osen_core::training::{LossSpec, Target};
use osen_core::Tensor;
use rayon::prelude::*;

use crate::config::{DatasetSource, ExperimentConfig};
use crate::data::{ingest_image_dir, split_5_1_1};
use crate::error::Result;
use crate::pipelines::{measurement_count, train_config, Stage};
use crate::report::RunResult;

/// Gradient magnitudes at or below this count as zero.
const EDGE_TOL: f64 = 1e-9;

pub struct CsOutcome {
    pub result: RunResult,
    pub model: Option<ModelParams>,
    pub mask: FourierSamplingMask,
}

struct Images {
    train: Vec<Tensor>,
    val: Vec<Tensor>,
    test: Vec<Tensor>,
}

fn load(cfg: &ExperimentConfig, seed: u64) -> Result<Images> {
    let side = cfg.phantom_side;
    match cfg.dataset {
        DatasetSource::ImageDir => {
            let set = ingest_image_dir(cfg.data_path.as_deref().expect("validated"), side)?;
            let split = split_5_1_1(set.images.len(), seed);
            let pick = |idx: &[usize], cap: usize| idx.iter().take(cap).map(|&i| set.images[i].clone()).collect();
            Ok(Images { train: pick(&split.train, cfg.train_samples), val: pick(&split.val, cfg.val_samples), test: pick(&split.test, cfg.test_samples) })
        }
        _ => {
            let phantom = |i: usize| piecewise_constant_phantom(side, (seed << 32) | i as u64);
            let range = |from: usize, count: usize| (from..from + count).map(phantom).collect::<osen_core::Result<Vec<_>>>();
            // Training phantoms are unnecessary when the weights come from the truth.
            let (n_train, n_val) = if cfg.oracle_weights { (0, 0) } else { (cfg.train_samples, cfg.val_samples) };
            Ok(Images {
                train: range(0, n_train)?,
                val: range(cfg.train_samples, n_val)?,
                test: range(cfg.train_samples + cfg.val_samples, cfg.test_samples)?,
            })
        }
    }
}

fn stack2(a: &Tensor, b: &Tensor) -> osen_core::Result<Tensor> {
    let (h, w) = a.dims2()?;
    Tensor::new(&[2, h, w], a.data().iter().chain(b.data()).copied().collect())
}

fn split2(t: &Tensor) -> osen_core::Result<(Tensor, Tensor)> {
    let (_, h, w) = t.dims3()?;
    let n = h * w;
    Ok((Tensor::new(&[h, w], t.data()[..n].to_vec())?, Tensor::new(&[h, w], t.data()[n..].to_vec())?))
}

/// Two-channel network input (gradients of the zero-filled image) and the
/// true two-channel gradient support.
fn features(s: &Tensor, mask: &FourierSamplingMask) -> osen_core::Result<Sample> {
    let zf = zero_filling(&measure_image(s, mask)?, mask)?;
    let (gx, gy) = grad(&zf)?;
    let (mx, my) = gradient_support(s, EDGE_TOL)?;
    Ok(Sample { input: stack2(&gx, &gy)?, target: Target::mask(stack2(&mx, &my)?) })
}

struct ImageScore {
    psnr: [f64; 3],
    nmse: [f64; 3],
    converged: [bool; 2],
    iterations: [usize; 2],
    support: SeMetrics,
}

pub fn run_cs_tv(cfg: &ExperimentConfig, mr: f64, q: usize, seed: u64) -> Result<CsOutcome> {
    let side = cfg.phantom_side;
    let images = load(cfg, seed).stage("data")?;
    let m = measurement_count(mr, side * side);
    let mask = semi_random_mask(side, m, seed).stage("mask")?;
    let mut spec = ModelSpec::new(cfg.variant.variant(), q, ModelInput::Image { channels: 2, height: side, width: side });
    spec.hidden = (cfg.hidden[0], cfg.hidden[1]);

    let samples = |set: &[Tensor]| -> osen_core::Result<Vec<Sample>> { set.par_iter().map(|s| features(s, &mask)).collect() };
    let test = samples(&images.test).stage("features")?;
    let model = if cfg.oracle_weights {
        None
    } else {
        let data = Dataset { train: samples(&images.train).stage("features")?, val: samples(&images.val).stage("features")? };
        let init = build(&spec, seed, None).stage("model")?;
        Some(train_model(init, &data, &train_config(cfg, seed, LossSpec::mse())).stage("train")?)
    };

    let tv = cfg.tv();
    let scores: Vec<ImageScore> = images
        .test
        .par_iter()
        .zip(&test)
        .map(|(s, sample)| {
            let probs = match &model {
                Some((params, _)) => infer(params, &sample.input)?.probs,
                None => sample.target.mask.clone(),
            };
            let (px, py) = split2(&probs)?;
            let y = measure_image(s, &mask)?;
            let zf = zero_filling(&y, &mask)?;
            let plain = admm_tv(&y, &mask, &tv)?;
            let weighted = admm_weighted_tv(&y, &mask, &weights_from_prob(&px, &py, cfg.epsilon)?, &tv)?;
            let peak = s.max_abs();
            let mut psnr = [0.0; 3];
            let mut nmse = [0.0; 3];
            for (k, est) in [&zf, &plain.image, &weighted.image].into_iter().enumerate() {
                (psnr[k], nmse[k]) = psnr_nmse(s, est, peak)?;
            }
            let support = se_metrics(sample.target.mask.data(), binarize(&probs, cfg.threshold).data())?;
            Ok(ImageScore {
                psnr,
                nmse,
                converged: [plain.converged, weighted.converged],
                iterations: [plain.iterations, weighted.iterations],
                support,
            })
        })
        .collect::<osen_core::Result<_>>()
        .stage("reconstruct")?;

    let n = scores.len() as f64;
    let avg = |f: &dyn Fn(&ImageScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    let se = SeMetrics::macro_average(&scores.iter().map(|s| s.support).collect::<Vec<_>>());
    let mut metrics = Vec::new();
    for (k, name) in ["zf", "tv", "wtv"].iter().enumerate() {
        metrics.push((format!("psnr_{}", name), avg(&|s| s.psnr[k])));
    }
    for (k, name) in ["zf", "tv", "wtv"].iter().enumerate() {
        metrics.push((format!("nmse_{}", name), avg(&|s| s.nmse[k])));
    }
    for (k, name) in ["tv", "wtv"].iter().enumerate() {
        metrics.push((format!("{}_converged", name), avg(&|s| s.converged[k] as u8 as f64)));
        metrics.push((format!("{}_iterations", name), avg(&|s| s.iterations[k] as f64)));
    }
    metrics.push(("edge_f1".into(), se.f1));
    metrics.push(("edge_precision".into(), se.precision));
    metrics.push(("edge_sensitivity".into(), se.sensitivity));
    metrics.push(("m".into(), m as f64));
    metrics.push(("oracle".into(), cfg.oracle_weights as u8 as f64));
    let result = RunResult {
        pipeline: cfg.pipeline.name().into(),
        variant: cfg.variant.name().into(),
        q,
        ncl: false,
        mr,
        seed,
        param_count: param_count(&spec),
        metrics,
        sweep: Vec::new(),
        wall_seconds: 0.0,
    };
    Ok(CsOutcome { result, model: model.map(|(p, _)| p), mask })
}
