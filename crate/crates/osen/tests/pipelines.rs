use std::path::Path;

use osen::config::{ExperimentConfig, Pipeline};
use osen::data::ingest_image_dir;
use osen::run_experiment;

fn small_se() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(Pipeline::SeSpatial);
    cfg.side = 8;
    cfg.train_samples = 40;
    cfg.val_samples = 10;
    cfg.test_samples = 20;
    cfg.epochs = Some(1);
    cfg.hidden = [4, 3];
    cfg.noise_snr_db = vec![f64::INFINITY, 10.0];
    cfg
}

#[test]
fn se_smoke_run_reports_f1_and_param_count() {
    let report = run_experiment(&small_se()).unwrap();
    assert_eq!(report.runs.len(), 1);
    let csv = report.metrics_csv().unwrap();
    let mut rd = csv::Reader::from_reader(csv.as_bytes());
    let header = rd.headers().unwrap().clone();
    assert!(header.iter().any(|h| h == "f1"));
    assert!(header.iter().any(|h| h == "param_count"));
    let row = rd.records().next().unwrap().unwrap();
    let pc: usize = row[header.iter().position(|h| h == "param_count").unwrap()].parse().unwrap();
    assert_eq!(pc, report.runs[0].param_count);
    assert_eq!(report.runs[0].sweep.len(), 2);
    let f1 = report.runs[0].metric("f1").unwrap();
    assert!((0.0..=1.0).contains(&f1));
}

#[test]
fn metrics_are_byte_identical_across_reruns() {
    let mut cfg = small_se();
    cfg.seeds = vec![3, 4];
    let a = run_experiment(&cfg).unwrap().metrics_csv().unwrap();
    let b = run_experiment(&cfg).unwrap().metrics_csv().unwrap();
    assert_eq!(a, b);
}

#[test]
fn summary_row_is_the_mean_of_seed_rows() {
    let mut cfg = ExperimentConfig::defaults(Pipeline::CsTv);
    cfg.oracle_weights = true;
    cfg.phantom_side = 32;
    cfg.test_samples = 2;
    cfg.seeds = vec![0, 1, 2, 3, 4];
    let report = run_experiment(&cfg).unwrap();
    let summary = report.summary_csv().unwrap();
    let mut rd = csv::Reader::from_reader(summary.as_bytes());
    let header = rd.headers().unwrap().clone();
    let row = rd.records().next().unwrap().unwrap();
    for name in ["psnr_zf", "psnr_tv", "psnr_wtv", "nmse_tv"] {
        let col = header.iter().position(|h| h == name).unwrap();
        let got: f64 = row[col].parse().unwrap();
        let want = report.runs.iter().map(|r| r.metric(name).unwrap()).sum::<f64>() / 5.0;
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{}: {} vs {}", name, got, want);
    }
}

#[test]
fn oracle_cs_run_has_weighted_row_at_least_unweighted() {
    let mut cfg = ExperimentConfig::defaults(Pipeline::CsTv);
    cfg.oracle_weights = true;
    cfg.test_samples = 3;
    let report = run_experiment(&cfg).unwrap();
    let r = &report.runs[0];
    assert!(r.metric("psnr_wtv").unwrap() >= r.metric("psnr_tv").unwrap());
    assert!(r.metric("psnr_tv").unwrap() > r.metric("psnr_zf").unwrap());
}

#[test]
fn trained_cs_run_completes() {
    let mut cfg = ExperimentConfig::defaults(Pipeline::CsTv);
    cfg.phantom_side = 16;
    cfg.train_samples = 6;
    cfg.val_samples = 2;
    cfg.test_samples = 2;
    cfg.epochs = Some(1);
    cfg.hidden = [3, 2];
    let report = run_experiment(&cfg).unwrap();
    let r = &report.runs[0];
    assert_eq!(r.metric("oracle"), Some(0.0));
    assert!(r.metric("psnr_wtv").unwrap().is_finite());
}

#[test]
fn rbc_smoke_run() {
    let mut cfg = ExperimentConfig::defaults(Pipeline::RbcClassify);
    cfg.train_samples = 60;
    cfg.val_samples = 12;
    cfg.test_samples = 30;
    cfg.epochs = Some(1);
    cfg.hidden = [4, 3];
    let report = run_experiment(&cfg).unwrap();
    let r = &report.runs[0];
    for name in ["accuracy", "crc_accuracy"] {
        assert!((0.0..=1.0).contains(&r.metric(name).unwrap()));
    }
}

fn pgm8(path: &Path, w: usize, h: usize, px: impl Fn(usize, usize) -> u8) {
    let mut b = format!("P5\n{} {}\n255\n", w, h).into_bytes();
    for r in 0..h {
        for c in 0..w {
            b.push(px(r, c));
        }
    }
    std::fs::write(path, b).unwrap();
}

#[test]
fn image_dir_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ingest_image_dir(dir.path(), 8).is_err());
    std::fs::write(dir.path().join("broken.pgm"), b"P5\n4 4\n255\n").unwrap();
    pgm8(&dir.path().join("ok.pgm"), 4, 4, |_, _| 7);
    let err = ingest_image_dir(dir.path(), 4).unwrap_err().to_string();
    assert!(err.contains("broken.pgm"), "{}", err);
    assert!(!err.contains("ok.pgm"), "{}", err);
}

#[test]
fn image_dir_keeps_native_geometry_and_scales() {
    let dir = tempfile::tempdir().unwrap();
    pgm8(&dir.path().join("a.pgm"), 256, 256, |r, c| ((r + c) % 256) as u8);
    let set = ingest_image_dir(dir.path(), 256).unwrap();
    assert_eq!(set.images.len(), 1);
    assert_eq!(set.images[0].shape(), &[256, 256]);
    assert_eq!(set.images[0].at(0, 0), 0.0);
    assert!((set.images[0].at(1, 2) - 3.0 / 255.0).abs() < 1e-15);
}

#[test]
fn sixteen_bit_samples_scale_by_full_range() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = b"P5\n2 2\n65535\n".to_vec();
    for v in [0u16, 1, 32768, 65535] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    std::fs::write(dir.path().join("w.pgm"), b).unwrap();
    let set = ingest_image_dir(dir.path(), 2).unwrap();
    let got = set.images[0].data();
    let want = [0.0, 1.0 / 65535.0, 32768.0 / 65535.0, 1.0];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-15, "{:?}", got);
    }
}

#[test]
fn crop_then_resize_to_side() {
    let dir = tempfile::tempdir().unwrap();
    // 12x8: the centre 8x8 square is uniform, the side bands are not
    pgm8(&dir.path().join("wide.pgm"), 12, 8, |_, c| if (2..10).contains(&c) { 200 } else { 0 });
    let set = ingest_image_dir(dir.path(), 4).unwrap();
    assert_eq!(set.images[0].shape(), &[4, 4]);
    assert!(set.images[0].data().iter().all(|&v| (v - 200.0 / 255.0).abs() < 1e-3));
}
