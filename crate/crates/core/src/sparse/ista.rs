use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, Error, Result};
use crate::numerics::largest_eigenvalue;
use crate::tensor::Tensor;

/// `sign(v) * max(|v| - t, 0)`.
#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IstaRun {
    pub x: Tensor,
    /// Objective before the first and after every iteration.
    pub objective: Vec<f64>,
    pub lipschitz: f64,
}

/// Minimises `0.5 ||D x - y||^2 + lambda ||x||_1` by ISTA with step `1/L`,
/// `L` the largest eigenvalue of `D^T D`.
pub fn ista_lasso(d: &Tensor, y: &[f64], lambda: f64, iters: usize) -> Result<Tensor> {
    Ok(weighted_ista(d, y, lambda, None, iters)?.x)
}

/// ISTA for `0.5 ||D x - y||^2 + lambda sum_i gamma_i |x_i|`; coordinate
/// `i` is shrunk by `lambda * gamma_i / L`. Fails if the objective ever
/// increases.
pub fn weighted_ista(d: &Tensor, y: &[f64], lambda: f64, gamma: Option<&[f64]>, iters: usize) -> Result<IstaRun> {
    let (m, n) = d.dims2()?;
    if y.len() != m {
        return Err(shape_err!("measurement has {} entries, dictionary has {} rows", y.len(), m));
    }
    if !(lambda >= 0.0) {
        return Err(arg_err!("lambda must be non-negative"));
    }
    let ones = vec![1.0; n];
    let gamma = gamma.unwrap_or(&ones);
    if gamma.len() != n || gamma.iter().any(|g| !(*g >= 0.0)) {
        return Err(arg_err!("weights must be {} non-negative values", n));
    }
    let l = largest_eigenvalue(d)?;
    let mut x = vec![0.0; n];
    let objective_of = |x: &[f64]| -> Result<f64> {
        let r = d.matvec(x)?;
        let fit: f64 = r.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
        let pen: f64 = x.iter().zip(gamma).filter(|(v, _)| **v != 0.0).map(|(v, g)| g * v.abs()).sum();
        Ok(fit + lambda * pen)
    };
    let mut objective = vec![objective_of(&x)?];
    if l == 0.0 {
        return Ok(IstaRun { x: Tensor::vector(x), objective, lipschitz: l });
    }
    let thresholds: Vec<f64> = gamma.iter().map(|g| lambda * g / l).collect();
    for it in 0..iters {
        let mut r = d.matvec(&x)?;
        r.iter_mut().zip(y).for_each(|(a, b)| *a -= b);
        let grad = d.t_matvec(&r)?;
        let next: Vec<f64> = x.iter().zip(&grad).zip(&thresholds).map(|((xi, gi), t)| soft_threshold(xi - gi / l, *t)).collect();
        let f = objective_of(&next)?;
        let prev = *objective.last().expect("seeded");
        if f > prev + 1e-9 * prev.abs().max(1.0) {
            return Err(Error::Diverged(format!("ISTA objective rose from {} to {} at iteration {}", prev, f, it)));
        }
        objective.push(f);
        let moved = next != x;
        x = next;
        if !moved {
            break;
        }
    }
    Ok(IstaRun { x: Tensor::vector(x), objective, lipschitz: l })
}
