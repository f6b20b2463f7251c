use crate::error::{arg_err, Result};
use crate::sparse::{soft_threshold, weighted_ista};
use crate::tensor::Tensor;

/// Per-direction TV weights `Gamma_x`, `Gamma_y`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMaps {
    pub gamma_x: Tensor,
    pub gamma_y: Tensor,
}

impl WeightMaps {
    pub fn uniform(h: usize, w: usize) -> Self {
        Self { gamma_x: Tensor::filled(&[h, w], 1.0), gamma_y: Tensor::filled(&[h, w], 1.0) }
    }

    pub fn validate(&self) -> Result<()> {
        self.gamma_x.dims2()?;
        self.gamma_x.same_shape(&self.gamma_y)?;
        if self.gamma_x.data().iter().chain(self.gamma_y.data()).any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(arg_err!("weights must be positive and finite"));
        }
        Ok(())
    }
}

/// `gamma = 1 / (p + eps)` for each direction's support probability map.
pub fn weights_from_prob(px: &Tensor, py: &Tensor, eps: f64) -> Result<WeightMaps> {
    if !(eps > 0.0) {
        return Err(arg_err!("epsilon must be positive, got {}", eps));
    }
    px.dims2()?;
    px.same_shape(py)?;
    if px.data().iter().chain(py.data()).any(|p| !(0.0..=1.0).contains(p)) {
        return Err(arg_err!("probabilities must lie in [0, 1]"));
    }
    let f = |p: f64| 1.0 / (p + eps);
    Ok(WeightMaps { gamma_x: px.map(f), gamma_y: py.map(f) })
}

/// Elementwise `sign(v) * max(|v| - theta, 0)`.
pub fn weighted_soft_threshold(v: &Tensor, theta: &Tensor) -> Result<Tensor> {
    v.same_shape(theta)?;
    if theta.data().iter().any(|t| !(*t >= 0.0)) {
        return Err(arg_err!("thresholds must be non-negative"));
    }
    v.zip_map(theta, soft_threshold)
}

/// Weighted lasso `min 0.5 ||D x - y||^2 + lambda ||gamma . x||_1` by ISTA.
pub fn weighted_lasso_ista(d: &Tensor, y: &[f64], gamma: &[f64], lambda: f64, iters: usize) -> Result<Tensor> {
    Ok(weighted_ista(d, y, lambda, Some(gamma), iters)?.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use alloc::vec::Vec;
    use crate::sparse::{gaussian_measurement_matrix, ista_lasso};
    use rand::Rng;

    #[test]
    fn weight_arithmetic() {
        let p = Tensor::vector(alloc::vec![0.8, 0.0, 1.0]).reshape(&[1, 3]).unwrap();
        let w = weights_from_prob(&p, &p, 0.2).unwrap();
        assert!((w.gamma_x.data()[0] - 1.0).abs() < 1e-15);
        assert!((w.gamma_x.data()[1] - 5.0).abs() < 1e-15);
        assert!((w.gamma_x.data()[2] - 1.0 / 1.2).abs() < 1e-15);
        assert!(weights_from_prob(&p, &p, 0.0).is_err());
        assert!(weights_from_prob(&p.scale(2.0), &p, 0.2).is_err());
        w.validate().unwrap();
    }

    #[test]
    fn thresholding_cases() {
        let v = Tensor::vector(alloc::vec![1.5, -0.3, 2.0]);
        let t = Tensor::vector(alloc::vec![0.5, 0.5, 0.0]);
        assert_eq!(weighted_soft_threshold(&v, &t).unwrap().data(), &[1.0, 0.0, 2.0]);
        assert!(weighted_soft_threshold(&v, &t.scale(-1.0)).is_err());
    }

    #[test]
    fn uniform_threshold_bit_matches_shared_kernel() {
        let mut g = rng::stream(4, rng::purpose::MISC, 0);
        let v = Tensor::from_fn(&[200], |_| g.gen_range(-2.0..2.0));
        let t = 0.37;
        let w = weighted_soft_threshold(&v, &Tensor::filled(&[200], t)).unwrap();
        for (a, b) in w.data().iter().zip(v.data()) {
            assert_eq!(a.to_bits(), soft_threshold(*b, t).to_bits());
        }
    }

    #[test]
    fn unit_weights_match_plain_lasso() {
        let d = gaussian_measurement_matrix(10, 30, 3).unwrap();
        let y: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let a = weighted_lasso_ista(&d, &y, &[1.0; 30], 0.05, 300).unwrap();
        let b = ista_lasso(&d, &y, 0.05, 300).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn huge_weight_pins_coordinate() {
        let d = gaussian_measurement_matrix(10, 30, 5).unwrap();
        let x0: Vec<f64> = (0..30).map(|i| if i == 4 { 1.0 } else { 0.0 }).collect();
        let y = d.matvec(&x0).unwrap();
        let mut gamma = alloc::vec![1.0; 30];
        gamma[4] = 1e9;
        let x = weighted_lasso_ista(&d, &y, &gamma, 0.01, 200).unwrap();
        assert_eq!(x.data()[4], 0.0);
    }

    fn support(x: &Tensor, tol: f64) -> Vec<usize> {
        x.data().iter().enumerate().filter(|(_, v)| v.abs() > tol).map(|(i, _)| i).collect()
    }

    #[test]
    fn oracle_weights_recover_support_where_uniform_fails() {
        // 10 x 30 dictionary with a 3-sparse signal; lambda large enough that
        // uniform shrinkage loses the smallest coefficient.
        let d = gaussian_measurement_matrix(10, 30, 11).unwrap();
        let truth = [2usize, 13, 27];
        let amps = [1.0, -0.8, 0.15];
        let mut x0 = alloc::vec![0.0; 30];
        for (&i, &a) in truth.iter().zip(&amps) {
            x0[i] = a;
        }
        let y = d.matvec(&x0).unwrap();
        let lambda = 0.2;
        let plain = ista_lasso(&d, &y, lambda, 5000).unwrap();
        assert_ne!(support(&plain, 1e-6), truth.to_vec());
        let gamma: Vec<f64> = (0..30).map(|i| if truth.contains(&i) { 1e-3 } else { 1e3 }).collect();
        let w = weighted_lasso_ista(&d, &y, &gamma, lambda, 5000).unwrap();
        assert_eq!(support(&w, 1e-6), truth.to_vec());
    }
}
