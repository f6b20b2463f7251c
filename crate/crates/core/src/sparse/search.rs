use alloc::vec::Vec;

use crate::error::{arg_err, Result};

/// Twelve log-spaced regularisation values from `1e-10` to `1e2`.
pub fn lambda_grid() -> Vec<f64> {
    (0..12).map(|i| libm::pow(10.0, -10.0 + 12.0 * i as f64 / 11.0)).collect()
}

/// Finer log-spaced values around a coarse winner, quarter-decade apart.
pub fn refine_lambda_grid(best: f64) -> Vec<f64> {
    (-3..=3).map(|k| best * libm::pow(10.0, k as f64 / 4.0)).collect()
}

/// Candidate with the highest score; ties keep the earlier candidate.
pub fn search_lambda(candidates: &[f64], mut score: impl FnMut(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &l in candidates {
        let s = score(l)?;
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((l, s));
        }
    }
    best.ok_or_else(|| arg_err!("no candidate values"))
}
