use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, Error, Result};
use crate::numerics::SpdFactor;
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

/// Domain in which the signal is sparse.
#[derive(Clone, Debug, PartialEq)]
pub enum Sparsifier {
    Identity,
    /// Synthesis basis `Phi` (`d x n`).
    Explicit(Tensor),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProxyKind {
    /// Maximum correlation, `B = D^T`.
    Mc,
    /// Regularised least squares, `B = (D^T D + lambda I)^-1 D^T`.
    Lmmse(f64),
}

/// `y = A x = A Phi s = D s`, together with a cached denoiser.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingProblem {
    pub a: Tensor,
    pub phi: Sparsifier,
    pub d: Tensor,
    denoiser: Option<(ProxyKind, Tensor)>,
}

impl SensingProblem {
    pub fn new(a: Tensor, phi: Sparsifier) -> Result<Self> {
        let d = match &phi {
            Sparsifier::Identity => a.clone(),
            Sparsifier::Explicit(p) => a.matmul(p)?,
        };
        let (m, n) = d.dims2()?;
        if m == 0 || m >= n {
            return Err(arg_err!("need 0 < m < n, got m = {}, n = {}", m, n));
        }
        Ok(Self { a, phi, d, denoiser: None })
    }

    pub fn m(&self) -> usize {
        self.d.shape()[0]
    }

    pub fn n(&self) -> usize {
        self.d.shape()[1]
    }

    /// Measurement rate `m / n`.
    pub fn mr(&self) -> f64 {
        self.m() as f64 / self.n() as f64
    }

    /// Computes and caches the `n x m` denoiser for `kind`.
    pub fn prepare(&mut self, kind: ProxyKind) -> Result<&Tensor> {
        if self.denoiser.as_ref().map(|(k, _)| *k) != Some(kind) {
            self.denoiser = Some((kind, denoiser(&self.d, kind)?));
        }
        Ok(&self.denoiser.as_ref().expect("just set").1)
    }

    pub fn cached_denoiser(&self) -> Option<(ProxyKind, &Tensor)> {
        self.denoiser.as_ref().map(|(k, b)| (*k, b))
    }

    pub fn measure(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.d.matvec(s)
    }
}

/// `n x m` denoiser `B` for dictionary `d` (`m x n`). The regularised
/// inverse factorises whichever of `D^T D + lambda I` and `D D^T + lambda I`
/// is smaller; both give the same `B`.
pub fn denoiser(d: &Tensor, kind: ProxyKind) -> Result<Tensor> {
    let dt = d.transpose()?;
    match kind {
        ProxyKind::Mc => Ok(dt),
        ProxyKind::Lmmse(lambda) => {
            if !(lambda >= 0.0) {
                return Err(arg_err!("lambda must be non-negative, got {}", lambda));
            }
            let (m, n) = d.dims2()?;
            let ridge = |mut g: Tensor| {
                for i in 0..g.shape()[0] {
                    let v = g.at(i, i) + lambda;
                    g.set(i, i, v);
                }
                g
            };
            if n <= m {
                SpdFactor::new(&ridge(d.t_matmul(d)?))?.solve(&dt)
            } else {
                // B^T = (D D^T + lambda I)^-1 D
                SpdFactor::new(&ridge(d.matmul(&dt)?))?.solve(d)?.transpose()
            }
        }
    }
}

/// Applies the problem's denoiser to `y`, reusing the cached matrix when it
/// matches `kind`.
pub fn proxy(problem: &SensingProblem, y: &[f64], kind: ProxyKind) -> Result<Tensor> {
    if y.len() != problem.m() {
        return Err(shape_err!("measurement has {} entries, problem has m = {}", y.len(), problem.m()));
    }
    match (kind, problem.cached_denoiser()) {
        (ProxyKind::Mc, _) => Ok(Tensor::vector(problem.d.t_matvec(y)?)),
        (k, Some((cached, b))) if k == cached => Ok(Tensor::vector(b.matvec(y)?)),
        (k, _) => Ok(Tensor::vector(denoiser(&problem.d, k)?.matvec(y)?)),
    }
}

/// `m x n` matrix with i.i.d. `N(0, 1/m)` entries.
pub fn gaussian_measurement_matrix(m: usize, n: usize, seed: u64) -> Result<Tensor> {
    if m == 0 || m >= n {
        return Err(arg_err!("need 0 < m < n, got m = {}, n = {}", m, n));
    }
    let mut g = rng::stream(seed, rng::purpose::MEASUREMENT, 0);
    let s = 1.0 / libm::sqrt(m as f64);
    Ok(Tensor::from_fn(&[m, n], |_| s * rng::normal(&mut g)))
}

/// Adds white Gaussian noise rescaled so the realised SNR is exactly
/// `snr_db`. An infinite SNR returns `y` unchanged.
pub fn add_measurement_noise(y: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    add_measurement_noise_with(y, snr_db, &mut rng::stream(seed, rng::purpose::NOISE, 0))
}

pub fn add_measurement_noise_with(y: &[f64], snr_db: f64, g: &mut Rng) -> Result<Vec<f64>> {
    if snr_db == f64::INFINITY {
        return Ok(y.to_vec());
    }
    if snr_db.is_nan() {
        return Err(arg_err!("SNR must be a number"));
    }
    let ey: f64 = y.iter().map(|v| v * v).sum();
    if ey == 0.0 {
        return Err(Error::InvalidArgument("cannot set an SNR for a zero measurement".into()));
    }
    let z: Vec<f64> = (0..y.len()).map(|_| rng::normal(g)).collect();
    let ez: f64 = z.iter().map(|v| v * v).sum();
    let scale = libm::sqrt(ey * libm::pow(10.0, -snr_db / 10.0) / ez);
    Ok(y.iter().zip(&z).map(|(a, b)| a + scale * b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::solve_spd;
    use rand::Rng as _;

    #[test]
    fn gaussian_columns_have_unit_energy() {
        let a = gaussian_measurement_matrix(39, 784, 7).unwrap();
        let at = a.transpose().unwrap();
        let mean: f64 = (0..784).map(|j| at.row(j).iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / 784.0;
        assert!((mean - 1.0).abs() < 0.15);
        assert_eq!(a, gaussian_measurement_matrix(39, 784, 7).unwrap());
        assert_ne!(a, gaussian_measurement_matrix(39, 784, 8).unwrap());
        assert!(gaussian_measurement_matrix(10, 10, 1).is_err());
    }

    #[test]
    fn column_norm_concentrates_as_m_grows() {
        let spread = |m: usize| {
            let a = gaussian_measurement_matrix(m, 400, 3).unwrap().transpose().unwrap();
            let norms: Vec<f64> = (0..400).map(|j| a.row(j).iter().map(|v| v * v).sum::<f64>()).collect();
            norms.iter().map(|v| (v - 1.0).abs()).sum::<f64>() / 400.0
        };
        assert!(spread(300) < spread(20));
        assert!(spread(300) < 0.1);
    }

    #[test]
    fn orthogonal_dictionary_is_inverted_exactly() {
        // 4x4 orthogonal matrix from a Householder reflection
        let u = [0.5, -0.5, 0.5, 0.5];
        let q = Tensor::from_fn(&[4, 4], |k| {
            let (i, j) = (k / 4, k % 4);
            (if i == j { 1.0 } else { 0.0 }) - 2.0 * u[i] * u[j]
        });
        let x = [0.3, -1.0, 0.0, 2.5];
        let y = q.matvec(&x).unwrap();
        let b = denoiser(&q, ProxyKind::Lmmse(0.0)).unwrap();
        for (a, b) in b.matvec(&y).unwrap().iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lmmse_matches_dense_inverse() {
        let d = gaussian_measurement_matrix(20, 60, 5).unwrap();
        let p = SensingProblem::new(d.clone(), Sparsifier::Identity).unwrap();
        let mut g = rng::stream(1, rng::purpose::MISC, 50);
        let y: Vec<f64> = (0..20).map(|_| g.gen_range(-1.0..1.0)).collect();
        let fast = proxy(&p, &y, ProxyKind::Lmmse(1e-2)).unwrap();
        let mut gram = d.t_matmul(&d).unwrap();
        for i in 0..60 {
            let v = gram.at(i, i) + 1e-2;
            gram.set(i, i, v);
        }
        let slow = solve_spd(&gram, &Tensor::vector(d.t_matvec(&y).unwrap())).unwrap();
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(proxy(&p, &[0.0; 20], ProxyKind::Mc).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(proxy(&p, &[0.0; 19], ProxyKind::Mc).is_err());
    }

    #[test]
    fn cached_denoiser_is_used() {
        let d = gaussian_measurement_matrix(10, 30, 2).unwrap();
        let mut p = SensingProblem::new(d, Sparsifier::Identity).unwrap();
        p.prepare(ProxyKind::Lmmse(0.1)).unwrap();
        let y = [0.5; 10];
        assert_eq!(proxy(&p, &y, ProxyKind::Lmmse(0.1)).unwrap(), Tensor::vector(p.cached_denoiser().unwrap().1.matvec(&y).unwrap()));
        assert!((p.mr() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_without_ridge_fails() {
        let d = Tensor::from_rows(&[&[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(denoiser(&d, ProxyKind::Lmmse(0.0)), Err(Error::NotPositiveDefinite)));
        assert!(denoiser(&d, ProxyKind::Lmmse(1e-3)).is_ok());
    }

    #[test]
    fn noise_hits_snr_exactly() {
        let y: Vec<f64> = (0..50).map(|i| libm::sin(i as f64)).collect();
        let noisy = add_measurement_noise(&y, 10.0, 4).unwrap();
        let ey: f64 = y.iter().map(|v| v * v).sum();
        let ez: f64 = y.iter().zip(&noisy).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((ez / ey - 0.1).abs() < 1e-12);
        assert_eq!(noisy, add_measurement_noise(&y, 10.0, 4).unwrap());
        assert_eq!(add_measurement_noise(&y, f64::INFINITY, 4).unwrap(), y);
        assert!(add_measurement_noise(&[0.0; 3], 10.0, 4).is_err());
    }

    proptest::proptest! {
        #[test]
        fn proxies_are_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..100) {
            let d = gaussian_measurement_matrix(8, 20, seed).unwrap();
            let mut p = SensingProblem::new(d, Sparsifier::Identity).unwrap();
            p.prepare(ProxyKind::Lmmse(0.05)).unwrap();
            let mut g = rng::stream(seed, rng::purpose::MISC, 51);
            let u: Vec<f64> = (0..8).map(|_| g.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..8).map(|_| g.gen_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
            for kind in [ProxyKind::Mc, ProxyKind::Lmmse(0.05)] {
                let lhs = proxy(&p, &mix, kind).unwrap();
                let rhs = proxy(&p, &u, kind).unwrap().scale(a).add(&proxy(&p, &v, kind).unwrap().scale(b)).unwrap();
                for (l, r) in lhs.data().iter().zip(rhs.data()) {
                    proptest::prop_assert!((l - r).abs() < 1e-10);
                }
            }
        }
    }
}
