use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{arg_err, shape_err, Error, Result};
use crate::tensor::{dot, Tensor};

fn to_matrix(t: &Tensor) -> Result<DMatrix<f64>> {
    let (r, c) = t.dims2()?;
    Ok(DMatrix::from_row_slice(r, c, t.data()))
}

fn from_matrix(m: &DMatrix<f64>) -> Tensor {
    let (r, c) = m.shape();
    Tensor::from_fn(&[r, c], |i| m[(i / c, i % c)])
}

/// Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    n: usize,
}

impl SpdFactor {
    pub fn new(m: &Tensor) -> Result<Self> {
        let (n, n2) = m.dims2()?;
        if n != n2 {
            return Err(shape_err!("SPD matrix must be square, got {}x{}", n, n2));
        }
        let scale = m.max_abs().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (m.at(i, j) - m.at(j, i)).abs() > 1e-10 * scale {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        let chol = Cholesky::new(to_matrix(m)?).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { chol, n })
    }

    pub fn solve(&self, rhs: &Tensor) -> Result<Tensor> {
        let (r, _) = match rhs.rank() {
            1 => (rhs.len(), 1),
            _ => rhs.dims2()?,
        };
        if r != self.n {
            return Err(shape_err!("rhs has {} rows, system has {}", r, self.n));
        }
        let b = if rhs.rank() == 1 { DMatrix::from_column_slice(r, 1, rhs.data()) } else { to_matrix(rhs)? };
        let x = self.chol.solve(&b);
        let out = from_matrix(&x);
        if rhs.rank() == 1 {
            out.reshape(&[r])
        } else {
            Ok(out)
        }
    }
}

/// Solves `M X = rhs` for symmetric positive definite `M` by Cholesky.
pub fn solve_spd(m: &Tensor, rhs: &Tensor) -> Result<Tensor> {
    SpdFactor::new(m)?.solve(rhs)
}

/// Leading principal directions of the rows of `x` (`N x d`), returned as
/// an orthonormal `m x d` matrix ordered by decreasing variance. Each row's
/// largest-magnitude entry is made positive.
pub fn pca_projection(x: &Tensor, m: usize) -> Result<Tensor> {
    let (n, d) = x.dims2()?;
    if n < 2 {
        return Err(arg_err!("PCA needs at least two samples, got {}", n));
    }
    if m == 0 || m > n.min(d) {
        return Err(arg_err!("component count {} outside 1..={}", m, n.min(d)));
    }
    let mut mean = alloc::vec![0.0; d];
    for i in 0..n {
        for (mu, v) in mean.iter_mut().zip(x.row(i)) {
            *mu += v / n as f64;
        }
    }
    let centered = Tensor::from_fn(&[n, d], |k| x.data()[k] - mean[k % d]);
    let cov = centered.t_matmul(&centered)?.scale(1.0 / (n - 1) as f64);
    let eig = SymmetricEigen::new(to_matrix(&cov)?);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top * d as f64 * 1e-12;
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > tol && eig.eigenvalues[i] > 0.0).count();
    if top <= 0.0 || m > rank {
        return Err(Error::RankDeficient { requested: m, rank: if top <= 0.0 { 0 } else { rank } });
    }
    let mut out = Tensor::zeros(&[m, d]);
    for (row, &idx) in order.iter().take(m).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let mut best = 0;
        for j in 1..d {
            if v[j].abs() > v[best].abs() {
                best = j;
            }
        }
        let sign = if v[best] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            out.set(row, j, sign * v[j]);
        }
    }
    Ok(out)
}

/// Largest eigenvalue of `M^T M` by power iteration, without forming `M^T M`.
pub fn largest_eigenvalue(m: &Tensor) -> Result<f64> {
    let (_, c) = m.dims2()?;
    if c == 0 {
        return Ok(0.0);
    }
    // deterministic, generic start vector
    let mut v: Vec<f64> = (0..c).map(|i| 1.0 + 0.5 * libm::sin(1.0 + i as f64 * 0.7)).collect();
    let nrm = libm::sqrt(dot(&v, &v));
    v.iter_mut().for_each(|x| *x /= nrm);
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let mv = m.matvec(&v)?;
        let w = m.t_matvec(&mv)?;
        let next = dot(&v, &w);
        let nrm = libm::sqrt(dot(&w, &w));
        if nrm == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|x| x / nrm).collect();
        if (next - lambda).abs() <= 1e-13 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut g = rng::stream(seed, rng::purpose::MISC, 3);
        Tensor::from_fn(shape, |_| g.gen_range(-1.0..1.0))
    }

    #[test]
    fn identity_and_diagonal_systems() {
        let b = Tensor::from_rows(&[&[1.0], &[-2.0], &[3.0]]).unwrap();
        assert_eq!(solve_spd(&Tensor::identity(3), &b).unwrap(), b);
        let m = Tensor::from_rows(&[&[2.0, 0.0], &[0.0, 4.0]]).unwrap();
        let x = solve_spd(&m, &Tensor::vector(alloc::vec![2.0, 8.0])).unwrap();
        assert!((x.data()[0] - 1.0).abs() < 1e-15 && (x.data()[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn random_spd_residual() {
        let g = random(&[10, 10], 1);
        let m = g.t_matmul(&g).unwrap().add(&Tensor::identity(10)).unwrap();
        let rhs = random(&[10, 3], 2);
        let x = solve_spd(&m, &rhs).unwrap();
        let resid = m.matmul(&x).unwrap().sub(&rhs).unwrap();
        assert!(resid.max_abs() <= 1e-8 * rhs.max_abs());
    }

    #[test]
    fn distinguishes_non_spd_from_shape_errors() {
        let m = Tensor::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert_eq!(solve_spd(&m, &Tensor::vector(alloc::vec![1.0, 1.0])), Err(Error::NotPositiveDefinite));
        let bad = solve_spd(&Tensor::identity(2), &Tensor::vector(alloc::vec![1.0; 3]));
        assert!(matches!(bad, Err(Error::Shape(_))));
    }

    #[test]
    fn pca_rejects_degenerate_cloud() {
        let x = Tensor::from_fn(&[5, 3], |i| (i % 3) as f64);
        assert!(matches!(pca_projection(&x, 1), Err(Error::RankDeficient { rank: 0, .. })));
    }

    #[test]
    fn pca_finds_diagonal_axis() {
        let x = Tensor::from_fn(&[6, 2], |i| (i / 2) as f64 - 2.5);
        let a = pca_projection(&x, 1).unwrap();
        let s = core::f64::consts::FRAC_1_SQRT_2;
        assert!((a.at(0, 0) - s).abs() < 1e-10 && (a.at(0, 1) - s).abs() < 1e-10);
    }

    #[test]
    fn pca_reports_achievable_rank() {
        // points on a line in 3-D
        let x = Tensor::from_fn(&[6, 3], |i| ((i / 3) as f64) * [1.0, 2.0, -1.0][i % 3]);
        assert_eq!(pca_projection(&x, 2), Err(Error::RankDeficient { requested: 2, rank: 1 }));
    }

    #[test]
    fn full_basis_is_an_isometry() {
        let (n, d) = (50, 8);
        let x = random(&[n, d], 3);
        let a = pca_projection(&x, d).unwrap();
        let aat = a.matmul(&a.transpose().unwrap()).unwrap();
        let eye = Tensor::identity(d);
        assert!(aat.sub(&eye).unwrap().max_abs() < 1e-8);
        let mut mean = [0.0; 8];
        for i in 0..n {
            for j in 0..d {
                mean[j] += x.at(i, j) / n as f64;
            }
        }
        let c = Tensor::from_fn(&[n, d], |k| x.data()[k] - mean[k % d]);
        let gram = c.matmul(&c.transpose().unwrap()).unwrap();
        let proj = c.matmul(&a.transpose().unwrap()).unwrap();
        let gram2 = proj.matmul(&proj.transpose().unwrap()).unwrap();
        assert!(gram.sub(&gram2).unwrap().max_abs() < 1e-8);
        for i in 0..d {
            let row = a.row(i);
            let big = row.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let m = random(&[8, 20], 4);
        let l = largest_eigenvalue(&m).unwrap();
        let gram = m.t_matmul(&m).unwrap();
        let eig = SymmetricEigen::new(to_matrix(&gram).unwrap());
        let top = eig.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
        assert!((l - top).abs() < 1e-9 * top);
    }
}
