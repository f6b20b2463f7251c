//! Run records and CSV report emission.

use std::path::Path;

use osen_core::sparse::SeMetrics;

use crate::config::ExperimentConfig;
use crate::error::{OsenError, Result};

/// F1 and friends at one measurement-noise level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub metrics: SeMetrics,
}

/// Outcome of one `(mr, q, seed)` run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub pipeline: String,
    pub variant: String,
    pub q: usize,
    pub ncl: bool,
    pub mr: f64,
    pub seed: u64,
    pub param_count: usize,
    /// Named scalar metrics, same names in the same order for every run of a pipeline.
    pub metrics: Vec<(String, f64)>,
    pub sweep: Vec<SweepPoint>,
    pub wall_seconds: f64,
}

impl RunResult {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub config: ExperimentConfig,
    /// In config order: `mr` outermost, then `q`, then seed.
    pub runs: Vec<RunResult>,
}

const KEYS: [&str; 7] = ["pipeline", "variant", "q", "ncl", "mr", "seed", "param_count"];

fn fmt(v: f64) -> String {
    // Shortest round-trip representation; byte-stable across runs.
    format!("{}", v)
}

fn key_fields(r: &RunResult, seed: &str) -> Vec<String> {
    vec![
        r.pipeline.clone(),
        r.variant.clone(),
        r.q.to_string(),
        r.ncl.to_string(),
        fmt(r.mr),
        seed.to_string(),
        r.param_count.to_string(),
    ]
}

fn to_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| OsenError::Config(format!("csv buffer: {}", e)))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Groups of runs sharing `(mr, q)`, in first-appearance order.
fn groups(runs: &[RunResult]) -> Vec<Vec<&RunResult>> {
    let mut out: Vec<Vec<&RunResult>> = Vec::new();
    for r in runs {
        match out.iter_mut().find(|g| g[0].mr == r.mr && g[0].q == r.q) {
            Some(g) => g.push(r),
            None => out.push(vec![r]),
        }
    }
    out
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    s / n as f64
}

const SWEEP: [&str; 6] = ["f1", "precision", "sensitivity", "specificity", "accuracy", "f2"];

fn sweep_values(m: &SeMetrics) -> [f64; 6] {
    [m.f1, m.precision, m.sensitivity, m.specificity, m.accuracy, m.f2]
}

impl Report {
    fn metric_names(&self) -> Vec<String> {
        self.runs.first().map(|r| r.metrics.iter().map(|(n, _)| n.clone()).collect()).unwrap_or_default()
    }

    /// One row per run. Wall time lives in `timings.csv` so this file is
    /// byte-identical across repeated runs.
    pub fn metrics_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let names = self.metric_names();
        w.write_record(KEYS.iter().map(|s| s.to_string()).chain(names.iter().cloned()))?;
        for r in &self.runs {
            let mut row = key_fields(r, &r.seed.to_string());
            row.extend(r.metrics.iter().map(|(_, v)| fmt(*v)));
            w.write_record(row)?;
        }
        to_string(w)
    }

    /// Seed-averaged rows, one per `(mr, q)`.
    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let names = self.metric_names();
        let mut header: Vec<String> = KEYS.iter().map(|s| s.to_string()).collect();
        header[5] = "seeds".into();
        w.write_record(header.into_iter().chain(names.iter().cloned()))?;
        for g in groups(&self.runs) {
            let mut row = key_fields(g[0], &g.len().to_string());
            for (k, _) in names.iter().enumerate() {
                row.push(fmt(mean(g.iter().map(|r| r.metrics[k].1))));
            }
            w.write_record(row)?;
        }
        to_string(w)
    }

    /// F1 against noise level per run, then seed means per `(mr, q)`.
    pub fn noise_sweep_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = KEYS.iter().chain(&["snr_db"]).chain(&SWEEP).map(|s| s.to_string());
        w.write_record(header)?;
        for r in &self.runs {
            for p in &r.sweep {
                let mut row = key_fields(r, &r.seed.to_string());
                row.push(fmt(p.snr_db));
                row.extend(sweep_values(&p.metrics).iter().map(|v| fmt(*v)));
                w.write_record(row)?;
            }
        }
        for g in groups(&self.runs) {
            for (i, p) in g[0].sweep.iter().enumerate() {
                let mut row = key_fields(g[0], "mean");
                row.push(fmt(p.snr_db));
                for k in 0..SWEEP.len() {
                    row.push(fmt(mean(g.iter().map(|r| sweep_values(&r.sweep[i].metrics)[k]))));
                }
                w.write_record(row)?;
            }
        }
        to_string(w)
    }

    pub fn timings_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(KEYS.iter().chain(&["wall_seconds"]))?;
        for r in &self.runs {
            let mut row = key_fields(r, &r.seed.to_string());
            row.push(format!("{:.3}", r.wall_seconds));
            w.write_record(row)?;
        }
        to_string(w)
    }
}

/// Writes `metrics.csv`, `summary.csv`, `noise_sweep.csv`, `timings.csv`
/// and `config.toml` (the effective configuration) into `dir`.
pub fn emit_report(report: &Report, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| OsenError::io(dir, e))?;
    let files = [
        ("metrics.csv", report.metrics_csv()?),
        ("summary.csv", report.summary_csv()?),
        ("noise_sweep.csv", report.noise_sweep_csv()?),
        ("timings.csv", report.timings_csv()?),
        ("config.toml", report.config.echo()),
    ];
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| OsenError::io(p, e))?;
    }
    Ok(())
}
