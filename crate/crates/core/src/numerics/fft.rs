use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{shape_err, Result};
use crate::tensor::{ComplexTensor, Tensor};

fn cis(theta: f64) -> Complex64 {
    Complex64::new(libm::cos(theta), libm::sin(theta))
}

/// Forward DFT of one length, unnormalised: `X_k = sum_j x_j e^{-2 pi i jk/n}`.
#[derive(Clone, Debug)]
enum Plan1d {
    Trivial,
    Radix2 { n: usize, twiddles: Vec<Complex64> },
    Bluestein { n: usize, chirp: Vec<Complex64>, kernel_hat: Vec<Complex64>, inner: alloc::boxed::Box<Plan1d> },
}

impl Plan1d {
    fn new(n: usize) -> Self {
        if n <= 1 {
            Plan1d::Trivial
        } else if n.is_power_of_two() {
            let twiddles = (0..n / 2).map(|k| cis(-2.0 * PI * k as f64 / n as f64)).collect();
            Plan1d::Radix2 { n, twiddles }
        } else {
            let m = (2 * n - 1).next_power_of_two();
            // k^2 mod 2n keeps the chirp phase exact for large k
            let chirp: Vec<Complex64> = (0..n)
                .map(|k| {
                    let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
                    cis(-PI * k2 / n as f64)
                })
                .collect();
            let mut kernel = vec![Complex64::new(0.0, 0.0); m];
            kernel[0] = chirp[0].conj();
            for k in 1..n {
                kernel[k] = chirp[k].conj();
                kernel[m - k] = chirp[k].conj();
            }
            let inner = Plan1d::new(m);
            inner.forward(&mut kernel);
            Plan1d::Bluestein { n, chirp, kernel_hat: kernel, inner: alloc::boxed::Box::new(inner) }
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        match self {
            Plan1d::Trivial => {}
            Plan1d::Radix2 { n, twiddles } => radix2(buf, *n, twiddles),
            Plan1d::Bluestein { n, chirp, kernel_hat, inner } => {
                let m = kernel_hat.len();
                let mut a = vec![Complex64::new(0.0, 0.0); m];
                for k in 0..*n {
                    a[k] = buf[k] * chirp[k];
                }
                inner.forward(&mut a);
                for (v, kh) in a.iter_mut().zip(kernel_hat) {
                    *v *= kh;
                }
                // inverse via conjugation
                a.iter_mut().for_each(|v| *v = v.conj());
                inner.forward(&mut a);
                let scale = 1.0 / m as f64;
                for k in 0..*n {
                    buf[k] = a[k].conj() * scale * chirp[k];
                }
            }
        }
    }
}

fn radix2(buf: &mut [Complex64], n: usize, twiddles: &[Complex64]) {
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let t = buf[start + k + half] * twiddles[k * step];
                let u = buf[start + k];
                buf[start + k] = u + t;
                buf[start + k + half] = u - t;
            }
        }
        len <<= 1;
    }
}

/// Reusable unitary 2-D DFT of a fixed `h x w` size.
#[derive(Clone, Debug)]
pub struct Fft2 {
    h: usize,
    w: usize,
    rows: Plan1d,
    cols: Plan1d,
}

impl Fft2 {
    pub fn new(h: usize, w: usize) -> Self {
        let rows = Plan1d::new(w);
        let cols = if h == w { rows.clone() } else { Plan1d::new(h) };
        Self { h, w, rows, cols }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    /// In-place unitary forward transform of row-major data.
    pub fn forward_inplace(&self, data: &mut [Complex64]) {
        self.transform(data);
        let s = 1.0 / libm::sqrt((self.h * self.w) as f64);
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// In-place unitary inverse transform of row-major data.
    pub fn inverse_inplace(&self, data: &mut [Complex64]) {
        data.iter_mut().for_each(|v| *v = v.conj());
        self.transform(data);
        let s = 1.0 / libm::sqrt((self.h * self.w) as f64);
        data.iter_mut().for_each(|v| *v = v.conj() * s);
    }

    fn transform(&self, data: &mut [Complex64]) {
        let (h, w) = (self.h, self.w);
        for r in 0..h {
            self.rows.forward(&mut data[r * w..(r + 1) * w]);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for r in 0..h {
                col[r] = data[r * w + c];
            }
            self.cols.forward(&mut col);
            for r in 0..h {
                data[r * w + c] = col[r];
            }
        }
    }

    pub fn forward(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        self.check(x.shape())?;
        let mut out = x.clone();
        self.forward_inplace(out.data_mut());
        Ok(out)
    }

    pub fn inverse(&self, x: &ComplexTensor) -> Result<ComplexTensor> {
        self.check(x.shape())?;
        let mut out = x.clone();
        self.inverse_inplace(out.data_mut());
        Ok(out)
    }

    fn check(&self, shape: &[usize]) -> Result<()> {
        if shape != [self.h, self.w] {
            return Err(shape_err!("plan is {}x{}, input {:?}", self.h, self.w, shape));
        }
        Ok(())
    }
}

fn dims(shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [h, w] => Ok((h, w)),
        _ => Err(shape_err!("fft2 expects a 2-D array, got {:?}", shape)),
    }
}

/// Unitary 2-D DFT.
pub fn fft2(x: &ComplexTensor) -> Result<ComplexTensor> {
    let (h, w) = dims(x.shape())?;
    Fft2::new(h, w).forward(x)
}

pub fn fft2_real(x: &Tensor) -> Result<ComplexTensor> {
    fft2(&ComplexTensor::from_real(x))
}

/// Unitary inverse 2-D DFT.
pub fn ifft2(x: &ComplexTensor) -> Result<ComplexTensor> {
    let (h, w) = dims(x.shape())?;
    Fft2::new(h, w).inverse(x)
}
