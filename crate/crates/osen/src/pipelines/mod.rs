//! The three experiment pipelines and the parallel runner.

mod cs;
mod rbc;
mod se;

use std::time::Instant;

use osen_core::models::{encode_params, ModelParams, TrainConfig};
use osen_core::training::{AdamConfig, LossSpec};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Pipeline};
use crate::error::{OsenError, Result};
use crate::report::{Report, RunResult};

pub use cs::{run_cs_tv, CsOutcome};
pub use rbc::run_rbc_classify;
pub use se::run_se_spatial;

/// Attaches a stage name to a failure.
pub(crate) trait Stage<T> {
    fn stage(self, name: &str) -> Result<T>;
}

impl<T, E: Into<OsenError>> Stage<T> for std::result::Result<T, E> {
    fn stage(self, name: &str) -> Result<T> {
        self.map_err(|e| OsenError::Stage { stage: name.to_string(), config: String::new(), source: Box::new(e.into()) })
    }
}

pub(crate) fn train_config(cfg: &ExperimentConfig, seed: u64, loss: LossSpec) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs(),
        batch_size: cfg.batch_size,
        adam: AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() },
        loss,
        freeze_shifts: cfg.freeze_shifts,
        fit_input_scale: true,
        seed,
    }
}

/// `round(mr * n)` kept inside `1..n`.
pub(crate) fn measurement_count(mr: f64, n: usize) -> usize {
    ((mr * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Number of worker threads: `OSEN_THREADS` if set, else the machine's parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var("OSEN_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| OsenError::Config(format!("OSEN_THREADS must be a positive integer, got {:?}", v))),
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// A finished run plus whatever it trained.
pub struct RunOutput {
    pub result: RunResult,
    pub model: Option<ModelParams>,
    pub mask_text: Option<String>,
}

pub(crate) fn run_one(cfg: &ExperimentConfig, mr: f64, q: usize, seed: u64) -> Result<RunOutput> {
    let start = Instant::now();
    let mut out = match cfg.pipeline {
        Pipeline::SeSpatial => run_se_spatial(cfg, mr, q, seed)?,
        Pipeline::RbcClassify => run_rbc_classify(cfg, mr, q, seed)?,
        Pipeline::CsTv => {
            let o = run_cs_tv(cfg, mr, q, seed)?;
            RunOutput { result: o.result, model: o.model, mask_text: Some(o.mask.to_text()) }
        }
    };
    out.result.wall_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

fn model_name(r: &RunResult) -> String {
    format!("{}_{}{}_q{}_mr{}_seed{}", r.pipeline, if r.ncl { "ncl_" } else { "" }, r.variant, r.q, r.mr, r.seed)
}

/// Runs every `(mr, q, seed)` combination on `OSEN_THREADS` workers and
/// returns the results in config order. Trained models and masks are
/// written under `output/` when `save_models` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &mr in &cfg.mr {
        for &q in &cfg.q {
            for &seed in &cfg.seeds {
                jobs.push((mr, q, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count()?)
        .build()
        .map_err(|e| OsenError::Config(format!("thread pool: {}", e)))?;
    let outputs: Vec<Result<RunOutput>> = pool.install(|| jobs.par_iter().map(|&(mr, q, seed)| run_one(cfg, mr, q, seed)).collect());
    let mut runs = Vec::with_capacity(outputs.len());
    for o in outputs {
        let o = o.map_err(|e| match e {
            OsenError::Stage { stage, source, .. } => OsenError::Stage { stage, config: cfg.echo(), source },
            other => OsenError::Stage { stage: "run".into(), config: cfg.echo(), source: Box::new(other) },
        })?;
        if cfg.save_models {
            let name = model_name(&o.result);
            if let Some(m) = &o.model {
                let dir = cfg.output.join("models");
                std::fs::create_dir_all(&dir).map_err(|e| OsenError::io(&dir, e))?;
                let p = dir.join(format!("{}.osen", name));
                std::fs::write(&p, encode_params(m)?).map_err(|e| OsenError::io(p, e))?;
            }
            if let Some(t) = &o.mask_text {
                let dir = cfg.output.join("masks");
                std::fs::create_dir_all(&dir).map_err(|e| OsenError::io(&dir, e))?;
                let p = dir.join(format!("{}.txt", name));
                std::fs::write(&p, t).map_err(|e| OsenError::io(p, e))?;
            }
        }
        runs.push(o.result);
    }
    Ok(Report { config: cfg.clone(), runs })
}
