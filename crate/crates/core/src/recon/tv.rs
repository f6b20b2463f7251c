use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{arg_err, shape_err, Error, Result};
use crate::numerics::Fft2;
use crate::recon::grad::{div, grad};
use crate::recon::mask::{measure_image, zero_filling, FourierSamplingMask};
use crate::recon::weights::{weighted_soft_threshold, WeightMaps};
use crate::sparse::soft_threshold;
use crate::tensor::{ComplexTensor, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvConfig {
    pub lambda: f64,
    pub rho: f64,
    /// Relaxation factor mixing `grad S` with the previous `z`.
    pub relax_alpha: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_it: usize,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self { lambda: 0.01, rho: 1.0, relax_alpha: 0.7, abs_tol: 1e-4, rel_tol: 1e-2, max_it: 2000 }
    }
}

impl TvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.rho > 0.0) {
            return Err(arg_err!("need lambda >= 0 and rho > 0"));
        }
        if !(self.relax_alpha > 0.0 && self.relax_alpha < 2.0) {
            return Err(arg_err!("relaxation factor must lie in (0, 2)"));
        }
        if !(self.abs_tol >= 0.0) || !(self.rel_tol >= 0.0) || self.max_it == 0 {
            return Err(arg_err!("tolerances must be non-negative and max_it positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TvResult {
    pub image: Tensor,
    pub iterations: usize,
    /// False when `max_it` was reached before the residual test passed.
    pub converged: bool,
    /// Primal and dual residual norms after every iteration.
    pub history: Vec<(f64, f64)>,
}

/// `0.5 ||y - M F S||^2 + lambda sum(Gamma_x |grad_x S| + Gamma_y |grad_y S|)`.
pub fn tv_objective(
    s: &Tensor,
    y: &ComplexTensor,
    mask: &FourierSamplingMask,
    gamma: Option<&WeightMaps>,
    lambda: f64,
) -> Result<f64> {
    let fs = measure_image(s, mask)?;
    if fs.len() != y.len() {
        return Err(shape_err!("{} measurements for a mask of {} frequencies", y.len(), fs.len()));
    }
    let fit: f64 = fs.data().iter().zip(y.data()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * 0.5;
    let (gx, gy) = grad(s)?;
    let tv: f64 = match gamma {
        None => gx.data().iter().chain(gy.data()).map(|v| v.abs()).sum(),
        Some(w) => {
            let wx = gx.data().iter().zip(w.gamma_x.data()).map(|(v, g)| g * v.abs());
            let wy = gy.data().iter().zip(w.gamma_y.data()).map(|(v, g)| g * v.abs());
            wx.chain(wy).sum()
        }
    };
    Ok(fit + lambda * tv)
}

/// Exact solver for `(Re(F^H M F) + rho grad^T grad) S = Re(F^H M^H y) + rho grad^T v`.
///
/// Restricting `S` to real images replaces the mask and the zero-filled
/// spectrum by their conjugate-symmetric parts; both operators are then
/// diagonal in the DFT basis.
pub(crate) struct SpectralSolver {
    fft: Fft2,
    n: usize,
    rho: f64,
    denom: Vec<f64>,
    data: Vec<Complex64>,
}

impl SpectralSolver {
    pub(crate) fn new(y: &ComplexTensor, mask: &FourierSamplingMask, rho: f64) -> Result<Self> {
        let n = mask.n_side();
        let zf = mask.scatter(y)?;
        let ind = mask.indicator();
        let mirror = |k: usize| ((n - k / n) % n) * n + (n - k % n) % n;
        let pi = core::f64::consts::PI;
        let mut denom = Vec::with_capacity(n * n);
        let mut data = Vec::with_capacity(n * n);
        for k in 0..n * n {
            let j = mirror(k);
            let (a, b) = ((k / n) as f64, (k % n) as f64);
            let sa = libm::sin(pi * a / n as f64);
            let sb = libm::sin(pi * b / n as f64);
            let eig = 4.0 * (sa * sa + sb * sb);
            denom.push(0.5 * (ind.data()[k] + ind.data()[j]) + rho * eig);
            data.push(0.5 * (zf.data()[k] + zf.data()[j].conj()));
        }
        Ok(Self { fft: Fft2::new(n, n), n, rho, denom, data })
    }

    pub(crate) fn solve(&self, vx: &Tensor, vy: &Tensor) -> Result<Tensor> {
        let mut spec = ComplexTensor::from_real(&div(vx, vy)?);
        self.fft.forward_inplace(spec.data_mut());
        for ((c, d), den) in spec.data_mut().iter_mut().zip(&self.data).zip(&self.denom) {
            // Only the unsampled DC bin can be singular; its value is fixed at zero.
            *c = if *den > 0.0 { (*d + *c * self.rho) / *den } else { Complex64::new(0.0, 0.0) };
        }
        self.fft.inverse_inplace(spec.data_mut());
        Tensor::new(&[self.n, self.n], spec.data().iter().map(|c| c.re).collect())
    }
}

fn shrink(v: &Tensor, gamma: Option<&Tensor>, t: f64) -> Result<Tensor> {
    match gamma {
        None => Ok(v.map(|x| soft_threshold(x, t))),
        Some(g) => weighted_soft_threshold(v, &g.scale(t)),
    }
}

fn run(y: &ComplexTensor, mask: &FourierSamplingMask, gamma: Option<&WeightMaps>, cfg: &TvConfig) -> Result<TvResult> {
    cfg.validate()?;
    let n = mask.n_side();
    if let Some(w) = gamma {
        w.validate()?;
        if w.gamma_x.shape() != [n, n] {
            return Err(shape_err!("weights {:?} do not match mask side {}", w.gamma_x.shape(), n));
        }
    }
    let solver = SpectralSolver::new(y, mask, cfg.rho)?;
    let mut s = zero_filling(y, mask)?;
    let (mut zx, mut zy) = grad(&s)?;
    let mut ux = Tensor::zeros(&[n, n]);
    let mut uy = Tensor::zeros(&[n, n]);
    let t = cfg.lambda / cfg.rho;
    let a = cfg.relax_alpha;
    let sqrt_n = libm::sqrt((n * n) as f64);
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_it {
        s = solver.solve(&zx.sub(&ux)?, &zy.sub(&uy)?)?;
        let (gx, gy) = grad(&s)?;
        let hx = gx.zip_map(&zx, |g, z| a * g + (1.0 - a) * z)?;
        let hy = gy.zip_map(&zy, |g, z| a * g + (1.0 - a) * z)?;
        let nzx = shrink(&hx.add(&ux)?, gamma.map(|w| &w.gamma_x), t)?;
        let nzy = shrink(&hy.add(&uy)?, gamma.map(|w| &w.gamma_y), t)?;
        ux.add_scaled_inplace(&hx.sub(&nzx)?, 1.0)?;
        uy.add_scaled_inplace(&hy.sub(&nzy)?, 1.0)?;
        let primal = libm::sqrt(gx.sub(&nzx)?.norm_sq() + gy.sub(&nzy)?.norm_sq());
        let dual = cfg.rho * div(&nzx.sub(&zx)?, &nzy.sub(&zy)?)?.norm();
        zx = nzx;
        zy = nzy;
        if !primal.is_finite() || !dual.is_finite() {
            return Err(Error::NonFinite(alloc::format!("ADMM residuals at iteration {}", history.len())));
        }
        history.push((primal, dual));
        let gnorm = libm::sqrt(gx.norm_sq() + gy.norm_sq());
        let znorm = libm::sqrt(zx.norm_sq() + zy.norm_sq());
        let eps_pri = core::f64::consts::SQRT_2 * sqrt_n * cfg.abs_tol + cfg.rel_tol * gnorm.max(znorm);
        let eps_dual = sqrt_n * cfg.abs_tol + cfg.rel_tol * cfg.rho * div(&ux, &uy)?.norm();
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }
    }
    s.ensure_finite("TV reconstruction")?;
    Ok(TvResult { image: s, iterations: history.len(), converged, history })
}

/// Weighted anisotropic TV reconstruction from Fourier samples by
/// over-relaxed scaled ADMM on the split `z = grad S`, started from the
/// zero-filling image.
pub fn admm_weighted_tv(y: &ComplexTensor, mask: &FourierSamplingMask, gamma: &WeightMaps, cfg: &TvConfig) -> Result<TvResult> {
    run(y, mask, Some(gamma), cfg)
}

/// Unweighted TV reconstruction.
pub fn admm_tv(y: &ComplexTensor, mask: &FourierSamplingMask, cfg: &TvConfig) -> Result<TvResult> {
    run(y, mask, None, cfg)
}
