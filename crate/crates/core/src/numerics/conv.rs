use alloc::vec;

use crate::error::{arg_err, Result};
use crate::tensor::{axpy, dot, Tensor};

/// Same-size 2-D cross-correlation with zero padding of `(f-1)/2`.
pub fn conv2d_same(x: &Tensor, k: &Tensor) -> Result<Tensor> {
    let (h, w) = x.dims2()?;
    let (f, f2) = k.dims2()?;
    if f != f2 || f % 2 == 0 {
        return Err(arg_err!("kernel must be square with odd extent, got {}x{}", f, f2));
    }
    if h == 0 || w == 0 {
        return Err(arg_err!("empty input {}x{}", h, w));
    }
    let pad = pad_plane(x.data(), h, w, f / 2);
    let mut out = vec![0.0; h * w];
    correlate_acc(&mut out, &pad, h, w, k.data(), f);
    Tensor::new(&[h, w], out)
}

/// Elementwise integer power. `q = 0` is rejected; build a ones tensor instead.
pub fn hadamard_pow(x: &Tensor, q: u32) -> Result<Tensor> {
    if q == 0 {
        return Err(arg_err!("power 0 is not a Hadamard power; use Tensor::filled(shape, 1.0)"));
    }
    Ok(x.map(|v| powi(v, q)))
}

#[inline]
pub(crate) fn powi(v: f64, q: u32) -> f64 {
    let mut acc = v;
    for _ in 1..q {
        acc *= v;
    }
    acc
}

/// Copies an `h x w` plane into a zero border of width `p`.
fn pad_plane(src: &[f64], h: usize, w: usize, p: usize) -> alloc::vec::Vec<f64> {
    let pw = w + 2 * p;
    let mut out = vec![0.0; (h + 2 * p) * pw];
    for r in 0..h {
        out[(r + p) * pw + p..(r + p) * pw + p + w].copy_from_slice(&src[r * w..(r + 1) * w]);
    }
    out
}

/// `out += padded ⋆ kernel`, where `padded` already carries the zero border.
pub(crate) fn correlate_acc(out: &mut [f64], padded: &[f64], h: usize, w: usize, kernel: &[f64], f: usize) {
    let pw = w + f - 1;
    for p in 0..h {
        let orow = &mut out[p * w..(p + 1) * w];
        for i in 0..f {
            let src = &padded[(p + i) * pw..(p + i) * pw + pw];
            for j in 0..f {
                let wt = kernel[i * f + j];
                if wt != 0.0 {
                    axpy(orow, wt, &src[j..j + w]);
                }
            }
        }
    }
}

/// Adjoint of [`correlate_acc`] with respect to the padded input:
/// `dpadded += full-convolution(g, kernel)`.
pub(crate) fn correlate_adjoint_acc(dpadded: &mut [f64], g: &[f64], h: usize, w: usize, kernel: &[f64], f: usize) {
    let pw = w + f - 1;
    for p in 0..h {
        let grow = &g[p * w..(p + 1) * w];
        for i in 0..f {
            let dst = &mut dpadded[(p + i) * pw..(p + i) * pw + pw];
            for j in 0..f {
                let wt = kernel[i * f + j];
                if wt != 0.0 {
                    axpy(&mut dst[j..j + w], wt, grow);
                }
            }
        }
    }
}

/// `dkernel[i,j] += sum_{p,r} g[p,r] * padded[p+i, r+j]`.
pub(crate) fn correlate_weight_grad(dkernel: &mut [f64], g: &[f64], padded: &[f64], h: usize, w: usize, f: usize) {
    let pw = w + f - 1;
    for p in 0..h {
        let grow = &g[p * w..(p + 1) * w];
        for i in 0..f {
            let src = &padded[(p + i) * pw..(p + i) * pw + pw];
            for j in 0..f {
                dkernel[i * f + j] += dot(grow, &src[j..j + w]);
            }
        }
    }
}
