use alloc::vec;

use crate::error::Result;
use crate::tensor::Tensor;

/// Real-valued translation `out(p, r) = x(p + alpha, r + beta)` resolved by
/// bilinear interpolation over the four surrounding grid points. Samples
/// outside the grid read as zero.
///
/// At integer shifts the fractional part is zero, so derivatives with respect
/// to the shift are the right-sided ones.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shift {
    row0: isize,
    col0: isize,
    frac_row: f64,
    frac_col: f64,
}

impl Shift {
    pub fn new(alpha: f64, beta: f64) -> Self {
        let a0 = libm::floor(alpha);
        let b0 = libm::floor(beta);
        Self { row0: a0 as isize, col0: b0 as isize, frac_row: alpha - a0, frac_col: beta - b0 }
    }

    pub fn is_identity(&self) -> bool {
        self.row0 == 0 && self.col0 == 0 && self.frac_row == 0.0 && self.frac_col == 0.0
    }

    fn row_weights(&self) -> [f64; 2] {
        [1.0 - self.frac_row, self.frac_row]
    }

    fn col_weights(&self) -> [f64; 2] {
        [1.0 - self.frac_col, self.frac_col]
    }

    /// `dst = T src` for an `h x w` plane.
    pub(crate) fn apply(&self, src: &[f64], h: usize, w: usize, dst: &mut [f64]) {
        if self.is_identity() {
            dst.copy_from_slice(src);
            return;
        }
        dst.iter_mut().for_each(|v| *v = 0.0);
        let (wa, wb) = (self.row_weights(), self.col_weights());
        for di in 0..2 {
            for dj in 0..2 {
                let wt = wa[di] * wb[dj];
                if wt == 0.0 {
                    continue;
                }
                self.for_each_overlap(di, dj, h, w, |p, r0, c0, len| {
                    let d = &mut dst[p * w + c0..p * w + c0 + len];
                    let srow = &src[r0 * w..(r0 + 1) * w];
                    let off = (c0 as isize + self.col0 + dj as isize) as usize;
                    for (dv, sv) in d.iter_mut().zip(&srow[off..off + len]) {
                        *dv += wt * sv;
                    }
                });
            }
        }
    }

    /// `dsrc += T^T g`.
    pub(crate) fn adjoint_acc(&self, g: &[f64], h: usize, w: usize, dsrc: &mut [f64]) {
        if self.is_identity() {
            for (d, v) in dsrc.iter_mut().zip(g) {
                *d += v;
            }
            return;
        }
        let (wa, wb) = (self.row_weights(), self.col_weights());
        for di in 0..2 {
            for dj in 0..2 {
                let wt = wa[di] * wb[dj];
                if wt == 0.0 {
                    continue;
                }
                self.for_each_overlap(di, dj, h, w, |p, r0, c0, len| {
                    let off = (c0 as isize + self.col0 + dj as isize) as usize;
                    let grow = &g[p * w + c0..p * w + c0 + len];
                    let drow = &mut dsrc[r0 * w + off..r0 * w + off + len];
                    for (dv, gv) in drow.iter_mut().zip(grow) {
                        *dv += wt * gv;
                    }
                });
            }
        }
    }

    /// Gradient of `<g, T src>` with respect to `(alpha, beta)`.
    pub(crate) fn shift_grad(&self, src: &[f64], g: &[f64], h: usize, w: usize) -> (f64, f64) {
        // corner[di][dj] = sum_{p,r} g(p,r) * src(p+row0+di, r+col0+dj)
        let mut corner = [[0.0; 2]; 2];
        for (di, row) in corner.iter_mut().enumerate() {
            for (dj, c) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                self.for_each_overlap(di, dj, h, w, |p, r0, c0, len| {
                    let off = (c0 as isize + self.col0 + dj as isize) as usize;
                    let grow = &g[p * w + c0..p * w + c0 + len];
                    let srow = &src[r0 * w + off..r0 * w + off + len];
                    acc += grow.iter().zip(srow).map(|(a, b)| a * b).sum::<f64>();
                });
                *c = acc;
            }
        }
        let (wa, wb) = (self.row_weights(), self.col_weights());
        let d_alpha = wb[0] * (corner[1][0] - corner[0][0]) + wb[1] * (corner[1][1] - corner[0][1]);
        let d_beta = wa[0] * (corner[0][1] - corner[0][0]) + wa[1] * (corner[1][1] - corner[1][0]);
        (d_alpha, d_beta)
    }

    /// Calls `f(out_row, src_row, first_out_col, len)` for every output row
    /// whose corner sample `(p+row0+di, ·+col0+dj)` lands inside the grid.
    #[inline]
    fn for_each_overlap(&self, di: usize, dj: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
        let dr = self.row0 + di as isize;
        let dc = self.col0 + dj as isize;
        let (h_i, w_i) = (h as isize, w as isize);
        let p_lo = (-dr).max(0);
        let p_hi = (h_i - dr).min(h_i);
        let c_lo = (-dc).max(0);
        let c_hi = (w_i - dc).min(w_i);
        if p_lo >= p_hi || c_lo >= c_hi {
            return;
        }
        let len = (c_hi - c_lo) as usize;
        for p in p_lo..p_hi {
            f(p as usize, (p + dr) as usize, c_lo as usize, len);
        }
    }
}

/// Bilinear translation of a 2-D tensor by real offsets.
pub fn bilinear_shift(x: &Tensor, alpha: f64, beta: f64) -> Result<Tensor> {
    let (h, w) = x.dims2()?;
    let mut out = vec![0.0; h * w];
    Shift::new(alpha, beta).apply(x.data(), h, w, &mut out);
    Tensor::new(&[h, w], out)
}
