//! Flat experiment configuration. Every key has a default except
//! `pipeline`; unknown keys are rejected.

use std::path::{Path, PathBuf};

use osen_core::models::Variant;
use osen_core::recon::TvConfig;
use serde::{Deserialize, Serialize};

use crate::error::{OsenError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    SeSpatial,
    RbcClassify,
    CsTv,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::SeSpatial => "se_spatial",
            Pipeline::RbcClassify => "rbc_classify",
            Pipeline::CsTv => "cs_tv",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Osen1,
    Osen2,
}

impl VariantName {
    pub fn variant(self) -> Variant {
        match self {
            VariantName::Osen1 => Variant::Osen1,
            VariantName::Osen2 => Variant::Osen2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VariantName::Osen1 => "osen1",
            VariantName::Osen2 => "osen2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Generated signals, class subspaces or phantoms, depending on the pipeline.
    Synthetic,
    /// IDX image file (`data_path`) with optional labels (`labels_path`).
    Idx,
    /// Directory of grayscale PGM files.
    ImageDir,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Mse,
    GroupL2,
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyName {
    Mc,
    Lmmse,
}

macro_rules! defaults {
    ($($name:ident: $ty:ty = $val:expr;)*) => {
        mod default {
            #[allow(unused_imports)]
            use super::*;
            $(pub fn $name() -> $ty { $val })*
        }
    };
}

defaults! {
    mr: Vec<f64> = vec![0.25];
    q: Vec<usize> = vec![3];
    variant: VariantName = VariantName::Osen1;
    seeds: Vec<u64> = vec![0];
    dataset: DatasetSource = DatasetSource::Synthetic;
    lambda_g: f64 = 0.01;
    lambda_c: f64 = 0.1;
    noise_snr_db: Vec<f64> = vec![f64::INFINITY];
    output: PathBuf = PathBuf::from("results");
    train_samples: usize = 2000;
    val_samples: usize = 400;
    test_samples: usize = 500;
    side: usize = 28;
    phantom_side: usize = 64;
    sparsity: f64 = 0.2;
    batch_size: usize = 32;
    learning_rate: f64 = 1e-3;
    hidden: [usize; 2] = [48, 24];
    proxy: ProxyName = ProxyName::Lmmse;
    crc_lambda: f64 = 1e-2;
    classes: usize = 6;
    atoms_per_class: usize = 8;
    block_h: usize = 2;
    block_w: usize = 4;
    block_rows: usize = 2;
    feature_dim: usize = 64;
    subspace_dim: usize = 3;
    epsilon: f64 = 0.2;
    threshold: f64 = 0.5;
    tv_lambda: f64 = 0.01;
    tv_rho: f64 = 1.0;
    tv_alpha: f64 = 0.7;
    tv_abs_tol: f64 = 1e-4;
    tv_rel_tol: f64 = 1e-2;
    tv_max_it: usize = 2000;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    #[serde(default = "default::mr")]
    pub mr: Vec<f64>,
    #[serde(default = "default::q")]
    pub q: Vec<usize>,
    #[serde(default = "default::variant")]
    pub variant: VariantName,
    #[serde(default)]
    pub ncl: bool,
    #[serde(default = "default::seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default::dataset")]
    pub dataset: DatasetSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
    /// 30 for classification, 100 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// `hybrid` for classification, `mse` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossName>,
    #[serde(default = "default::lambda_g")]
    pub lambda_g: f64,
    #[serde(default = "default::lambda_c")]
    pub lambda_c: f64,
    #[serde(default = "default::noise_snr_db")]
    pub noise_snr_db: Vec<f64>,
    #[serde(default = "default::output")]
    pub output: PathBuf,
    #[serde(default = "default::train_samples")]
    pub train_samples: usize,
    #[serde(default = "default::val_samples")]
    pub val_samples: usize,
    #[serde(default = "default::test_samples")]
    pub test_samples: usize,
    #[serde(default = "default::side")]
    pub side: usize,
    #[serde(default = "default::phantom_side")]
    pub phantom_side: usize,
    #[serde(default = "default::sparsity")]
    pub sparsity: f64,
    #[serde(default = "default::batch_size")]
    pub batch_size: usize,
    #[serde(default = "default::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default::hidden")]
    pub hidden: [usize; 2],
    #[serde(default)]
    pub freeze_shifts: bool,
    #[serde(default = "default::proxy")]
    pub proxy: ProxyName,
    /// Fixed LMMSE regulariser; searched on the validation split when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proxy_lambda: Option<f64>,
    #[serde(default = "default::crc_lambda")]
    pub crc_lambda: f64,
    #[serde(default)]
    pub crc_search: bool,
    #[serde(default = "default::classes")]
    pub classes: usize,
    #[serde(default = "default::atoms_per_class")]
    pub atoms_per_class: usize,
    #[serde(default = "default::block_h")]
    pub block_h: usize,
    #[serde(default = "default::block_w")]
    pub block_w: usize,
    #[serde(default = "default::block_rows")]
    pub block_rows: usize,
    #[serde(default = "default::feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default::subspace_dim")]
    pub subspace_dim: usize,
    #[serde(default)]
    pub oracle_weights: bool,
    #[serde(default = "default::epsilon")]
    pub epsilon: f64,
    #[serde(default = "default::threshold")]
    pub threshold: f64,
    #[serde(default = "default::tv_lambda")]
    pub tv_lambda: f64,
    #[serde(default = "default::tv_rho")]
    pub tv_rho: f64,
    #[serde(default = "default::tv_alpha")]
    pub tv_alpha: f64,
    #[serde(default = "default::tv_abs_tol")]
    pub tv_abs_tol: f64,
    #[serde(default = "default::tv_rel_tol")]
    pub tv_rel_tol: f64,
    #[serde(default = "default::tv_max_it")]
    pub tv_max_it: usize,
    #[serde(default)]
    pub save_models: bool,
}

fn bad(msg: impl Into<String>) -> OsenError {
    OsenError::Config(msg.into())
}

impl ExperimentConfig {
    /// Parses TOML text and validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative data paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| OsenError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.data_path, &mut cfg.labels_path].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Minimal config for `pipeline` with every other key defaulted.
    pub fn defaults(pipeline: Pipeline) -> Self {
        Self::parse(&format!("pipeline = \"{}\"", pipeline.name())).expect("defaults are valid")
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or(match self.pipeline {
            Pipeline::RbcClassify => 30,
            _ => 100,
        })
    }

    pub fn loss(&self) -> LossName {
        self.loss.unwrap_or(match self.pipeline {
            Pipeline::RbcClassify => LossName::Hybrid,
            _ => LossName::Mse,
        })
    }

    pub fn tv(&self) -> TvConfig {
        TvConfig {
            lambda: self.tv_lambda,
            rho: self.tv_rho,
            relax_alpha: self.tv_alpha,
            abs_tol: self.tv_abs_tol,
            rel_tol: self.tv_rel_tol,
            max_it: self.tv_max_it,
        }
    }

    /// Effective configuration (resolved defaults) as TOML.
    pub fn echo(&self) -> String {
        let mut c = self.clone();
        c.epochs = Some(self.epochs());
        c.loss = Some(self.loss());
        toml::to_string(&c).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.mr.is_empty() || self.q.is_empty() || self.seeds.is_empty() {
            return Err(bad("mr, q and seeds must be non-empty lists"));
        }
        if self.mr.iter().any(|m| !(*m > 0.0 && *m < 1.0)) {
            return Err(bad("every mr must lie in (0, 1)"));
        }
        if self.q.iter().any(|&q| q == 0 || q > 9) {
            return Err(bad("every q must lie in 1..=9"));
        }
        if self.noise_snr_db.is_empty() || self.noise_snr_db.iter().any(|s| s.is_nan()) {
            return Err(bad("noise_snr_db must be a non-empty list of numbers (inf for noise-free)"));
        }
        if self.epochs() == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(bad("epochs, batch_size and learning_rate must be positive"));
        }
        if self.train_samples == 0 || self.test_samples == 0 {
            return Err(bad("train_samples and test_samples must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(bad("hidden widths must be positive"));
        }
        if !(self.lambda_g >= 0.0 && self.lambda_c >= 0.0 && self.crc_lambda > 0.0) {
            return Err(bad("lambda_g, lambda_c must be non-negative and crc_lambda positive"));
        }
        if let Some(l) = self.proxy_lambda {
            if !(l > 0.0) {
                return Err(bad("proxy_lambda must be positive"));
            }
        }
        if !(self.epsilon > 0.0) || !(0.0..1.0).contains(&self.threshold) {
            return Err(bad("epsilon must be positive and threshold in [0, 1)"));
        }
        self.tv().validate().map_err(|e| bad(format!("tv settings: {}", e)))?;
        match self.dataset {
            DatasetSource::Synthetic => {}
            DatasetSource::Idx | DatasetSource::ImageDir if self.data_path.is_none() => {
                return Err(bad("dataset needs data_path"));
            }
            _ => {}
        }
        let loss = self.loss();
        match self.pipeline {
            Pipeline::SeSpatial => {
                if !(self.sparsity > 0.0 && self.sparsity < 1.0) || self.side < 2 {
                    return Err(bad("se_spatial needs 0 < sparsity < 1 and side >= 2"));
                }
                if self.dataset == DatasetSource::ImageDir {
                    return Err(bad("se_spatial reads synthetic or idx data"));
                }
                if loss != LossName::Mse {
                    return Err(bad("se_spatial trains with the mse loss"));
                }
            }
            Pipeline::RbcClassify => {
                if self.atoms_per_class != self.block_h * self.block_w {
                    return Err(bad("atoms_per_class must equal block_h * block_w"));
                }
                if self.classes < 2 || self.block_rows == 0 || self.classes % self.block_rows != 0 {
                    return Err(bad("classes must be at least 2 and divisible by block_rows"));
                }
                if self.dataset == DatasetSource::ImageDir {
                    return Err(bad("rbc_classify reads synthetic or idx data"));
                }
                if self.dataset == DatasetSource::Idx && self.labels_path.is_none() {
                    return Err(bad("rbc_classify on idx data needs labels_path"));
                }
                if self.subspace_dim == 0 || self.feature_dim < 2 {
                    return Err(bad("subspace_dim and feature_dim must be positive"));
                }
                if self.val_samples == 0 {
                    return Err(bad("rbc_classify needs validation samples"));
                }
            }
            Pipeline::CsTv => {
                if self.phantom_side < 8 || self.phantom_side % 2 != 0 {
                    return Err(bad("phantom_side must be even and at least 8"));
                }
                if self.dataset == DatasetSource::Idx {
                    return Err(bad("cs_tv reads synthetic phantoms or an image directory"));
                }
                if self.ncl {
                    return Err(bad("cs_tv has no compressive front end; set ncl = false"));
                }
                if loss != LossName::Mse {
                    return Err(bad("cs_tv trains with the mse loss"));
                }
            }
        }
        Ok(())
    }
}
