//! Sensing problems, linear proxies, support metrics, collaborative
//! representation classification and an ISTA lasso.

mod crc;
mod ista;
mod metrics;
mod problem;
mod search;

pub use crc::{build_classification_dictionary, crc_classify, ClassDictionary, CrcClassifier, CrcResult};
pub use ista::{ista_lasso, soft_threshold, weighted_ista, IstaRun};
pub use metrics::{psnr_nmse, se_metrics, support_mask_from_signal, ConfusionCounts, SeMetrics};
pub use problem::{
    add_measurement_noise, add_measurement_noise_with, denoiser, gaussian_measurement_matrix, proxy, ProxyKind,
    SensingProblem, Sparsifier,
};
pub use search::{lambda_grid, refine_lambda_grid, search_lambda};
