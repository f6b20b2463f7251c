use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

/// `1` where `|x| > tau`, else `0`.
pub fn support_mask_from_signal(x: &Tensor, tau: f64) -> Tensor {
    x.map(|v| if v.abs() > tau { 1.0 } else { 0.0 })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn count(v: &[f64], v_hat: &[f64]) -> Result<Self> {
        if v.len() != v_hat.len() {
            return Err(shape_err!("mask lengths differ: {} vs {}", v.len(), v_hat.len()));
        }
        let mut c = Self::default();
        for (&t, &p) in v.iter().zip(v_hat) {
            match (t != 0.0, p != 0.0) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Support-estimation scores. Ratios with a zero denominator are 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SeMetrics {
    pub precision: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub f1: f64,
    pub f2: f64,
    pub accuracy: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// `(1 + b^2) P S / (b^2 P + S)`, 0 when both are 0.
pub fn fbeta(precision: f64, sensitivity: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + sensitivity;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * sensitivity / den
    }
}

impl SeMetrics {
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let sensitivity = ratio(c.tp, c.tp + c.fn_);
        Self {
            precision,
            specificity: ratio(c.tn, c.tn + c.fp),
            sensitivity,
            f1: fbeta(precision, sensitivity, 1.0),
            f2: fbeta(precision, sensitivity, 2.0),
            accuracy: ratio(c.tp + c.tn, c.total()),
        }
    }

    /// Per-sample metrics averaged over the batch.
    pub fn macro_average(items: &[SeMetrics]) -> SeMetrics {
        if items.is_empty() {
            return SeMetrics::default();
        }
        let n = items.len() as f64;
        let mut m = SeMetrics::default();
        for s in items {
            m.precision += s.precision;
            m.specificity += s.specificity;
            m.sensitivity += s.sensitivity;
            m.f1 += s.f1;
            m.f2 += s.f2;
            m.accuracy += s.accuracy;
        }
        SeMetrics {
            precision: m.precision / n,
            specificity: m.specificity / n,
            sensitivity: m.sensitivity / n,
            f1: m.f1 / n,
            f2: m.f2 / n,
            accuracy: m.accuracy / n,
        }
    }
}

pub fn se_metrics(v: &[f64], v_hat: &[f64]) -> Result<SeMetrics> {
    Ok(SeMetrics::from_counts(&ConfusionCounts::count(v, v_hat)?))
}

/// `(10 log10(peak^2 N / ||ref - est||^2), ||ref - est||^2 / ||ref||^2)`.
/// Identical inputs give an infinite PSNR.
pub fn psnr_nmse(reference: &Tensor, est: &Tensor, peak: f64) -> Result<(f64, f64)> {
    reference.same_shape(est)?;
    if !(peak > 0.0) {
        return Err(arg_err!("peak must be positive"));
    }
    let rn = reference.norm_sq();
    if rn == 0.0 {
        return Err(arg_err!("NMSE is undefined for a zero reference"));
    }
    let err: f64 = reference.data().iter().zip(est.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    if err == 0.0 {
        return Ok((f64::INFINITY, 0.0));
    }
    let psnr = 10.0 * libm::log10(peak * peak * reference.len() as f64 / err);
    Ok((psnr, err / rn))
}
