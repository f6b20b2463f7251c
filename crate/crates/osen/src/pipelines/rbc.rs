//! Representation-based classification: PCA measurements, a class-blocked
//! dictionary, an OSEN with a class head, and the CRC baseline.

use osen_core::models::{binarize, build, infer, param_count, train_model, Dataset, Head, ModelInput, ModelSpec, Sample};
use osen_core::numerics::pca_projection;
use osen_core::rng;
use osen_core::sparse::{
    build_classification_dictionary, denoiser, lambda_grid, refine_lambda_grid, se_metrics, search_lambda, CrcClassifier, ProxyKind,
    SeMetrics,
};
use osen_core::training::{ClassGroups, LossSpec, Target};
use osen_core::Tensor;
use rayon::prelude::*;

use crate::config::{DatasetSource, ExperimentConfig, LossName};
use crate::data::{ingest_idx, split_5_1_1};
use crate::error::{OsenError, Result};
use crate::pipelines::{measurement_count, train_config, RunOutput, Stage};
use crate::report::RunResult;

/// Unit-norm feature vectors with labels.
struct Labelled {
    x: Vec<Tensor>,
    y: Vec<usize>,
}

struct ClassData {
    /// `atoms[c]` is `atoms_per_class x d`.
    atoms: Vec<Tensor>,
    train: Labelled,
    val: Labelled,
    test: Labelled,
    d: usize,
}

fn unit(v: Vec<f64>) -> Tensor {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Tensor::vector(if n > 0.0 { v.into_iter().map(|x| x / n).collect() } else { v })
}

fn gaussian(rows: usize, cols: usize, g: &mut rng::Rng) -> Tensor {
    Tensor::from_fn(&[rows, cols], |_| rng::normal(g))
}

/// Each class lives near its own random `r`-dimensional subspace of
/// `R^d`; every sample also carries a component from a subspace shared by
/// all classes plus isotropic noise.
fn synthetic(cfg: &ExperimentConfig, seed: u64) -> ClassData {
    let (k, d, r) = (cfg.classes, cfg.feature_dim, cfg.subspace_dim);
    let bases: Vec<Tensor> = (0..k).map(|c| gaussian(d, r, &mut rng::stream(seed, rng::purpose::CLASSES, c as u64))).collect();
    let shared = gaussian(d, r, &mut rng::stream(seed, rng::purpose::CLASSES, k as u64));
    let draw = |class: usize, index: u64| {
        let mut g = rng::stream(seed, rng::purpose::SIGNALS, index);
        let a: Vec<f64> = (0..r).map(|_| rng::normal(&mut g)).collect();
        let b: Vec<f64> = (0..r).map(|_| 0.5 * rng::normal(&mut g)).collect();
        let own = bases[class].matvec(&a).expect("sized");
        let common = shared.matvec(&b).expect("sized");
        unit(own.iter().zip(&common).map(|(u, v)| u + v + 0.1 * rng::normal(&mut g)).collect())
    };
    let mut next = 0u64;
    let mut set = |count: usize| {
        let mut out = Labelled { x: Vec::with_capacity(count), y: Vec::with_capacity(count) };
        for i in 0..count {
            out.x.push(draw(i % k, next));
            out.y.push(i % k);
            next += 1;
        }
        out
    };
    let mut atoms = Vec::with_capacity(k);
    for c in 0..k {
        let rows: Vec<f64> = (0..cfg.atoms_per_class)
            .flat_map(|j| draw(c, (1u64 << 40) + (c * cfg.atoms_per_class + j) as u64).into_data())
            .collect();
        atoms.push(Tensor::new(&[cfg.atoms_per_class, d], rows).expect("sized"));
    }
    let train = set(cfg.train_samples);
    let val = set(cfg.val_samples);
    let test = set(cfg.test_samples);
    ClassData { atoms, train, val, test, d }
}

/// Labelled IDX images: atoms are the first training images of each class.
fn from_idx(cfg: &ExperimentConfig, seed: u64) -> Result<ClassData> {
    let path = cfg.data_path.as_deref().expect("validated");
    let set = ingest_idx(path, cfg.labels_path.as_deref())?;
    let labels = set.labels.as_ref().expect("labels requested");
    let d = set.rows * set.cols;
    let split = split_5_1_1(set.images.len(), seed);
    let feature = |i: usize| unit(set.images[i].data().to_vec());
    let keep = |i: &&usize| labels[**i] < cfg.classes;
    let mut atom_rows: Vec<Vec<f64>> = vec![Vec::new(); cfg.classes];
    let mut used = vec![0usize; cfg.classes];
    let mut rest = Vec::new();
    for &i in split.train.iter().filter(keep) {
        let c = labels[i];
        if used[c] < cfg.atoms_per_class {
            atom_rows[c].extend(feature(i).into_data());
            used[c] += 1;
        } else {
            rest.push(i);
        }
    }
    if let Some(c) = used.iter().position(|&u| u < cfg.atoms_per_class) {
        return Err(OsenError::data(path, format!("class {} has fewer than {} training images", c, cfg.atoms_per_class)));
    }
    let take = |idx: Vec<usize>, cap: usize| Labelled {
        x: idx.iter().take(cap).map(|&i| feature(i)).collect(),
        y: idx.iter().take(cap).map(|&i| labels[i]).collect(),
    };
    let atoms = atom_rows.into_iter().map(|r| Tensor::new(&[cfg.atoms_per_class, d], r).expect("sized")).collect();
    Ok(ClassData {
        atoms,
        train: take(rest, cfg.train_samples),
        val: take(split.val.iter().filter(keep).copied().collect(), cfg.val_samples),
        test: take(split.test.iter().filter(keep).copied().collect(), cfg.test_samples),
        d,
    })
}

fn stack(rows: &[&Tensor]) -> osen_core::Result<Tensor> {
    let d = rows[0].len();
    Tensor::new(&[rows.len(), d], rows.iter().flat_map(|r| r.data().iter().copied()).collect())
}

pub fn run_rbc_classify(cfg: &ExperimentConfig, mr: f64, q: usize, seed: u64) -> Result<RunOutput> {
    let data = match cfg.dataset {
        DatasetSource::Synthetic => synthetic(cfg, seed),
        _ => from_idx(cfg, seed).stage("data")?,
    };
    let m = measurement_count(mr, data.d);
    // PCA over the atoms and the training features.
    let atom_rows: Vec<Tensor> =
        data.atoms.iter().flat_map(|a| (0..a.shape()[0]).map(move |i| Tensor::vector(a.row(i).to_vec()))).collect();
    let rows: Vec<&Tensor> = atom_rows.iter().chain(&data.train.x).collect();
    let a = pca_projection(&stack(&rows).stage("pca")?, m).stage("pca")?;
    let dict = build_classification_dictionary(&data.atoms, &a, (cfg.block_h, cfg.block_w), cfg.block_rows).stage("dictionary")?;
    let groups: ClassGroups = dict.groups;
    let (h, w) = (groups.height, groups.width);
    let measure = |x: &Tensor| -> osen_core::Result<Vec<f64>> { Ok(unit(a.matvec(x.data())?).into_data()) };
    let measured = |set: &Labelled| -> osen_core::Result<Vec<Vec<f64>>> { set.x.par_iter().map(measure).collect() };
    let (y_train, y_val, y_test) = (
        measured(&data.train).stage("measure")?,
        measured(&data.val).stage("measure")?,
        measured(&data.test).stage("measure")?,
    );

    let crc_accuracy = |lambda: f64, ys: &[Vec<f64>], labels: &[usize]| -> osen_core::Result<f64> {
        let crc = CrcClassifier::new(&dict.d, &dict.labels, lambda)?;
        let hits: Vec<bool> = ys.par_iter().zip(labels).map(|(y, &l)| crc.classify(y).map(|r| r.label == l)).collect::<osen_core::Result<_>>()?;
        Ok(hits.iter().filter(|&&b| b).count() as f64 / ys.len().max(1) as f64)
    };
    let lambda = if cfg.crc_search {
        let score = |l: f64| crc_accuracy(l, &y_val, &data.val.y);
        let (coarse, _) = search_lambda(&lambda_grid(), score).stage("crc")?;
        search_lambda(&refine_lambda_grid(coarse), score).stage("crc")?.0
    } else {
        cfg.crc_lambda
    };
    let crc_acc = crc_accuracy(lambda, &y_test, &data.test.y).stage("crc")?;

    let b = denoiser(&dict.d, ProxyKind::Lmmse(lambda)).stage("proxy")?;
    let input = if cfg.ncl { ModelInput::Measurements { m, height: h, width: w } } else { ModelInput::Image { channels: 1, height: h, width: w } };
    let mut spec = ModelSpec::new(cfg.variant.variant(), q, input).with_head(Head::Hybrid { group_h: cfg.block_h, group_w: cfg.block_w });
    spec.hidden = (cfg.hidden[0], cfg.hidden[1]);
    let encode = |y: &[f64]| -> osen_core::Result<Tensor> {
        if cfg.ncl {
            Ok(Tensor::vector(y.to_vec()))
        } else {
            Tensor::vector(b.matvec(y)?).reshape(&[1, h, w])
        }
    };
    let target = |label: usize| -> osen_core::Result<Target> {
        Ok(Target { mask: groups.block_mask(label).reshape(&[1, h, w])?, class: Some(label) })
    };
    let samples = |ys: &[Vec<f64>], labels: &[usize]| -> osen_core::Result<Vec<Sample>> {
        ys.iter().zip(labels).map(|(y, &l)| Ok(Sample { input: encode(y)?, target: target(l)? })).collect()
    };
    let train = Dataset { train: samples(&y_train, &data.train.y).stage("proxy")?, val: samples(&y_val, &data.val.y).stage("proxy")? };
    let loss = match cfg.loss() {
        LossName::Mse => LossSpec::mse(),
        LossName::GroupL2 => LossSpec::group_l2(groups, cfg.lambda_g),
        LossName::Hybrid => LossSpec::hybrid(groups, cfg.lambda_c),
    };
    let init = build(&spec, seed, cfg.ncl.then_some(&b)).stage("model")?;
    let (model, history) = train_model(init, &train, &train_config(cfg, seed, loss)).stage("train")?;

    let scored: Vec<(bool, SeMetrics)> = y_test
        .par_iter()
        .zip(&data.test.y)
        .map(|(y, &l)| {
            let out = infer(&model, &encode(y)?)?;
            let classes = out.classes.expect("class head");
            let c = classes.data();
            let guess = (0..c.len()).fold(0, |best, i| if c[i] > c[best] { i } else { best });
            let se = se_metrics(target(l)?.mask.data(), binarize(&out.probs, cfg.threshold).data())?;
            Ok((guess == l, se))
        })
        .collect::<osen_core::Result<_>>()
        .stage("evaluate")?;
    let accuracy = scored.iter().filter(|(hit, _)| *hit).count() as f64 / scored.len() as f64;
    let se = SeMetrics::macro_average(&scored.iter().map(|(_, s)| *s).collect::<Vec<_>>());
    let best = history.best_epoch.and_then(|e| history.epochs.get(e)).copied();
    let metrics = vec![
        ("accuracy".to_string(), accuracy),
        ("crc_accuracy".to_string(), crc_acc),
        ("f1".to_string(), se.f1),
        ("precision".to_string(), se.precision),
        ("sensitivity".to_string(), se.sensitivity),
        ("m".to_string(), m as f64),
        ("crc_lambda".to_string(), lambda),
        ("train_loss".to_string(), history.epochs.last().map_or(f64::NAN, |r| r.train_loss)),
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
        sweep: Vec::new(),
        wall_seconds: 0.0,
    };
    Ok(RunOutput { result, model: Some(model), mask_text: None })
}
