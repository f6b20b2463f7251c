//! Spatial-domain support estimation from Gaussian measurements.

use osen_core::models::{binarize, build, infer, param_count, train_model, Dataset, ModelInput, ModelParams, ModelSpec, Sample};
use osen_core::rng;
use osen_core::sparse::{
    add_measurement_noise_with, gaussian_measurement_matrix, lambda_grid, proxy, refine_lambda_grid, se_metrics, search_lambda,
    ProxyKind, SensingProblem, SeMetrics, Sparsifier,
};
use osen_core::training::{LossSpec, Target};
use osen_core::Tensor;
use rayon::prelude::*;

use crate::config::{DatasetSource, ExperimentConfig, ProxyName};
use crate::data::{ingest_idx, split_5_1_1, synth_sparse};
use crate::error::{OsenError, Result};
use crate::pipelines::{measurement_count, train_config, RunOutput, Stage};
use crate::report::{RunResult, SweepPoint};

struct Signals {
    train: Vec<Tensor>,
    val: Vec<Tensor>,
    test: Vec<Tensor>,
    h: usize,
    w: usize,
}

fn load(cfg: &ExperimentConfig, seed: u64) -> Result<Signals> {
    match cfg.dataset {
        DatasetSource::Synthetic => {
            let n = cfg.side * cfg.side;
            let k = (cfg.sparsity * n as f64).round() as usize;
            let total = cfg.train_samples + cfg.val_samples + cfg.test_samples;
            let mut all = synth_sparse(n, k, total, seed).map_err(OsenError::Config)?;
            let test = all.split_off(cfg.train_samples + cfg.val_samples);
            let val = all.split_off(cfg.train_samples);
            Ok(Signals { train: all, val, test, h: cfg.side, w: cfg.side })
        }
        _ => {
            let path = cfg.data_path.as_deref().expect("validated");
            let set = ingest_idx(path, None)?;
            let split = split_5_1_1(set.images.len(), seed);
            let pick = |idx: &[usize], cap: usize| -> Vec<Tensor> {
                idx.iter().take(cap).map(|&i| set.images[i].clone().reshape(&[set.rows * set.cols]).expect("sized")).collect()
            };
            let s = Signals {
                train: pick(&split.train, cfg.train_samples),
                val: pick(&split.val, cfg.val_samples),
                test: pick(&split.test, cfg.test_samples),
                h: set.rows,
                w: set.cols,
            };
            if s.train.is_empty() || s.test.is_empty() {
                return Err(OsenError::data(path, "too few images for a 5:1:1 split"));
            }
            Ok(s)
        }
    }
}

/// Mean squared proxy error on up to 200 samples.
fn proxy_error(problem: &SensingProblem, signals: &[Tensor], kind: ProxyKind) -> osen_core::Result<f64> {
    let subset = &signals[..signals.len().min(200)];
    let mut err = 0.0;
    for s in subset {
        let p = proxy(problem, &problem.measure(s.data())?, kind)?;
        err += p.sub(s)?.norm_sq();
    }
    Ok(err / subset.len().max(1) as f64)
}

/// LMMSE regulariser chosen on validation signals: coarse log grid, then a
/// quarter-decade refinement around the winner.
pub(crate) fn choose_proxy(cfg: &ExperimentConfig, problem: &SensingProblem, val: &[Tensor]) -> osen_core::Result<ProxyKind> {
    match (cfg.proxy, cfg.proxy_lambda) {
        (ProxyName::Mc, _) => Ok(ProxyKind::Mc),
        (ProxyName::Lmmse, Some(l)) => Ok(ProxyKind::Lmmse(l)),
        (ProxyName::Lmmse, None) => {
            let score = |l: f64| proxy_error(problem, val, ProxyKind::Lmmse(l)).map(|e| -e);
            let (coarse, _) = search_lambda(&lambda_grid(), score)?;
            let (fine, _) = search_lambda(&refine_lambda_grid(coarse), score)?;
            Ok(ProxyKind::Lmmse(fine))
        }
    }
}

fn mask_of(s: &Tensor, h: usize, w: usize) -> Tensor {
    Tensor::new(&[1, h, w], s.data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()).expect("sized")
}

pub fn run_se_spatial(cfg: &ExperimentConfig, mr: f64, q: usize, seed: u64) -> Result<RunOutput> {
    let sig = load(cfg, seed).stage("data")?;
    let (h, w) = (sig.h, sig.w);
    let n = h * w;
    let m = measurement_count(mr, n);
    let a = gaussian_measurement_matrix(m, n, seed).stage("sensing")?;
    let mut problem = SensingProblem::new(a, Sparsifier::Identity).stage("sensing")?;
    let val_for_search = if sig.val.is_empty() { &sig.train } else { &sig.val };
    let kind = choose_proxy(cfg, &problem, val_for_search).stage("proxy")?;
    let b = problem.prepare(kind).stage("proxy")?.clone();

    let input = if cfg.ncl { ModelInput::Measurements { m, height: h, width: w } } else { ModelInput::Image { channels: 1, height: h, width: w } };
    let mut spec = ModelSpec::new(cfg.variant.variant(), q, input);
    spec.hidden = (cfg.hidden[0], cfg.hidden[1]);
    let encode = |y: &[f64]| -> osen_core::Result<Tensor> {
        if cfg.ncl {
            Ok(Tensor::vector(y.to_vec()))
        } else {
            Tensor::vector(b.matvec(y)?).reshape(&[1, h, w])
        }
    };
    let samples = |set: &[Tensor]| -> osen_core::Result<Vec<Sample>> {
        set.par_iter()
            .map(|s| Ok(Sample { input: encode(&problem.measure(s.data())?)?, target: Target::mask(mask_of(s, h, w)) }))
            .collect()
    };
    let data = Dataset { train: samples(&sig.train).stage("proxy")?, val: samples(&sig.val).stage("proxy")? };
    let init = build(&spec, seed, cfg.ncl.then_some(&b)).stage("model")?;
    let (model, history) = train_model(init, &data, &train_config(cfg, seed, LossSpec::mse())).stage("train")?;

    let sweep = evaluate(cfg, &model, &problem, &sig.test, seed, &encode, h, w).stage("evaluate")?;
    let first = sweep[0].metrics;
    let last = history.epochs.last().copied();
    let best = history.best_epoch.and_then(|e| history.epochs.get(e)).copied();
    let lambda = match kind {
        ProxyKind::Lmmse(l) => l,
        ProxyKind::Mc => 0.0,
    };
    let metrics = vec![
        ("f1".to_string(), first.f1),
        ("f2".to_string(), first.f2),
        ("precision".to_string(), first.precision),
        ("sensitivity".to_string(), first.sensitivity),
        ("specificity".to_string(), first.specificity),
        ("accuracy".to_string(), first.accuracy),
        ("m".to_string(), m as f64),
        ("proxy_lambda".to_string(), lambda),
        ("train_loss".to_string(), last.map_or(f64::NAN, |r| r.train_loss)),
        ("val_loss".to_string(), best.map_or(f64::NAN, |r| r.val_loss)),
        ("best_epoch".to_string(), history.best_epoch.map_or(f64::NAN, |e| e as f64)),
    ];
    let result = RunResult {
        pipeline: cfg.pipeline.name().into(),
        variant: cfg.variant.name().into(),
        q,
        ncl: cfg.ncl,
        mr,
        seed,
        param_count: param_count(&spec),
        metrics,
        sweep,
        wall_seconds: 0.0,
    };
    Ok(RunOutput { result, model: Some(model), mask_text: None })
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    cfg: &ExperimentConfig,
    model: &ModelParams,
    problem: &SensingProblem,
    test: &[Tensor],
    seed: u64,
    encode: &(dyn Fn(&[f64]) -> osen_core::Result<Tensor> + Sync),
    h: usize,
    w: usize,
) -> osen_core::Result<Vec<SweepPoint>> {
    let mut sweep = Vec::with_capacity(cfg.noise_snr_db.len());
    for (li, &snr) in cfg.noise_snr_db.iter().enumerate() {
        let per: Vec<SeMetrics> = test
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut y = problem.measure(s.data())?;
                if snr.is_finite() {
                    let mut g = rng::stream(seed, rng::purpose::NOISE, ((li as u64) << 32) | i as u64);
                    y = add_measurement_noise_with(&y, snr, &mut g)?;
                }
                let out = infer(model, &encode(&y)?)?;
                se_metrics(mask_of(s, h, w).data(), binarize(&out.probs, cfg.threshold).data())
            })
            .collect::<osen_core::Result<_>>()?;
        sweep.push(SweepPoint { snr_db: snr, metrics: SeMetrics::macro_average(&per) });
    }
    Ok(sweep)
}
