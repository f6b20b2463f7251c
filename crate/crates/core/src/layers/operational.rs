use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, Error, Result};
use crate::layers::Activation;
use crate::numerics::{correlate_acc, correlate_adjoint_acc, correlate_weight_grad, Shift};
use crate::tensor::Tensor;

/// Parameters of one operational layer of super neurons.
///
/// Neuron `k` shifts its whole input stack by `(shifts[k,0], shifts[k,1])`,
/// raises every shifted sample to the powers `1..=Q`, correlates power `q`
/// of channel `c` with `weights[k,c,q-1]`, and adds `sum_q biases[k,q-1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OperationalLayerParams {
    /// `C_out x C_in x Q x f x f`
    pub weights: Tensor,
    /// `C_out x Q`
    pub biases: Tensor,
    /// `C_out x 2`, row and column offsets.
    pub shifts: Tensor,
    pub activation: Activation,
}

impl OperationalLayerParams {
    pub fn zeros(c_in: usize, c_out: usize, order: usize, kernel: usize, activation: Activation) -> Result<Self> {
        Self::from_parts(
            Tensor::zeros(&[c_out, c_in, order, kernel, kernel]),
            Tensor::zeros(&[c_out, order]),
            Tensor::zeros(&[c_out, 2]),
            activation,
        )
    }

    pub fn from_parts(weights: Tensor, biases: Tensor, shifts: Tensor, activation: Activation) -> Result<Self> {
        let p = Self { weights, biases, shifts, activation };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.weights.shape();
        if s.len() != 5 {
            return Err(shape_err!("operational weights must be 5-D, got {:?}", s));
        }
        let (c_out, order, f) = (s[0], s[2], s[3]);
        if order == 0 {
            return Err(arg_err!("Taylor order must be at least 1"));
        }
        if s[3] != s[4] || f % 2 == 0 {
            return Err(arg_err!("kernel must be square and odd, got {}x{}", s[3], s[4]));
        }
        if self.biases.shape() != [c_out, order] {
            return Err(shape_err!("biases {:?}, expected [{}, {}]", self.biases.shape(), c_out, order));
        }
        if self.shifts.shape() != [c_out, 2] {
            return Err(shape_err!("shifts {:?}, expected [{}, 2]", self.shifts.shape(), c_out));
        }
        Ok(())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        self.weights.ensure_finite("operational weights")?;
        self.biases.ensure_finite("operational biases")?;
        self.shifts.ensure_finite("operational shifts")
    }

    pub fn c_out(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn order(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn kernel_size(&self) -> usize {
        self.weights.shape()[3]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len() + self.shifts.len()
    }

    fn kernel(&self, k: usize, c: usize, qi: usize) -> &[f64] {
        let ff = self.kernel_size() * self.kernel_size();
        let base = ((k * self.c_in() + c) * self.order() + qi) * ff;
        &self.weights.data()[base..base + ff]
    }

    pub fn shift(&self, k: usize) -> Shift {
        Shift::new(self.shifts.at(k, 0), self.shifts.at(k, 1))
    }

    /// Clamps every shift into `[-limit, limit]`.
    pub fn clamp_shifts(&mut self, limit: f64) {
        self.shifts.data_mut().iter_mut().for_each(|v| *v = v.clamp(-limit, limit));
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        let (c, h, w) = x.dims3()?;
        if c != self.c_in() {
            return Err(shape_err!("layer expects {} input channels, got {}", self.c_in(), c));
        }
        if h == 0 || w == 0 {
            return Err(Error::Empty("operational layer input".into()));
        }
        Ok((c, h, w))
    }

    /// Pre-activation map of every neuron (`C_out x H x W`).
    pub fn preactivation(&self, x: &Tensor) -> Result<Tensor> {
        self.validate()?;
        self.ensure_finite()?;
        let (_, h, w) = self.check_input(x)?;
        let mut out = vec![0.0; self.c_out() * h * w];
        let mut scratch = OperationalScratch::new(self, h, w);
        for (k, z) in out.chunks_mut(h * w).enumerate() {
            self.forward_unit(x.data(), h, w, k, &mut scratch, z);
        }
        Tensor::new(&[self.c_out(), h, w], out)
    }

    /// Writes the pre-activation of neuron `k` into `z`.
    pub(crate) fn forward_unit(&self, x: &[f64], h: usize, w: usize, k: usize, s: &mut OperationalScratch, z: &mut [f64]) {
        let f = self.kernel_size();
        let pad = f / 2;
        let pw = w + 2 * pad;
        let bias: f64 = self.biases.row(k).iter().sum();
        z.iter_mut().for_each(|v| *v = bias);
        let shift = self.shift(k);
        for c in 0..self.c_in() {
            shift.apply(&x[c * h * w..(c + 1) * h * w], h, w, &mut s.shifted);
            for qi in 0..self.order() {
                for r in 0..h {
                    let dst = &mut s.padded[(r + pad) * pw + pad..(r + pad) * pw + pad + w];
                    let src = &s.shifted[r * w..(r + 1) * w];
                    if qi == 0 {
                        dst.copy_from_slice(src);
                    } else {
                        for (d, v) in dst.iter_mut().zip(src) {
                            *d *= v;
                        }
                    }
                }
                correlate_acc(z, &s.padded, h, w, self.kernel(k, c, qi), f);
            }
        }
    }

    /// Backpropagates `dz` (gradient w.r.t. neuron `k`'s pre-activation) into
    /// `dx` and the matching entries of `grads`.
    pub(crate) fn backward_unit(
        &self,
        x: &[f64],
        h: usize,
        w: usize,
        k: usize,
        dz: &[f64],
        s: &mut OperationalScratch,
        dx: Option<&mut [f64]>,
        grads: &mut OperationalLayerParams,
    ) {
        let f = self.kernel_size();
        let ff = f * f;
        let pad = f / 2;
        let pw = w + 2 * pad;
        let order = self.order();
        let total: f64 = dz.iter().sum();
        grads.biases.row_mut(k).iter_mut().for_each(|b| *b += total);
        let shift = self.shift(k);
        let mut dx = dx;
        let mut d_alpha = 0.0;
        let mut d_beta = 0.0;
        for c in 0..self.c_in() {
            let xc = &x[c * h * w..(c + 1) * h * w];
            shift.apply(xc, h, w, &mut s.shifted);
            s.ds.iter_mut().for_each(|v| *v = 0.0);
            for qi in 0..order {
                for r in 0..h {
                    let dst = &mut s.padded[(r + pad) * pw + pad..(r + pad) * pw + pad + w];
                    let src = &s.shifted[r * w..(r + 1) * w];
                    if qi == 0 {
                        dst.copy_from_slice(src);
                    } else {
                        for (d, v) in dst.iter_mut().zip(src) {
                            *d *= v;
                        }
                    }
                }
                let base = ((k * self.c_in() + c) * order + qi) * ff;
                correlate_weight_grad(&mut grads.weights.data_mut()[base..base + ff], dz, &s.padded, h, w, f);
                s.dpadded.iter_mut().for_each(|v| *v = 0.0);
                correlate_adjoint_acc(&mut s.dpadded, dz, h, w, self.kernel(k, c, qi), f);
                // d(s^q)/ds = q s^(q-1); s^(q-1) is the previous padded power
                let q = (qi + 1) as f64;
                for r in 0..h {
                    let dp = &s.dpadded[(r + pad) * pw + pad..(r + pad) * pw + pad + w];
                    let prev = &s.prev[r * w..(r + 1) * w];
                    let ds = &mut s.ds[r * w..(r + 1) * w];
                    for i in 0..w {
                        let lower = if qi == 0 { 1.0 } else { prev[i] };
                        ds[i] += q * lower * dp[i];
                    }
                }
                // keep s^q for the next order
                for r in 0..h {
                    let src = &s.padded[(r + pad) * pw + pad..(r + pad) * pw + pad + w];
                    s.prev[r * w..(r + 1) * w].copy_from_slice(src);
                }
            }
            let (da, db) = shift.shift_grad(xc, &s.ds, h, w);
            d_alpha += da;
            d_beta += db;
            if let Some(dx) = dx.as_deref_mut() {
                shift.adjoint_acc(&s.ds, h, w, &mut dx[c * h * w..(c + 1) * h * w]);
            }
        }
        let g = grads.shifts.row_mut(k);
        g[0] += d_alpha;
        g[1] += d_beta;
    }
}

/// Reusable buffers for the per-neuron kernels.
pub(crate) struct OperationalScratch {
    padded: Vec<f64>,
    dpadded: Vec<f64>,
    shifted: Vec<f64>,
    prev: Vec<f64>,
    ds: Vec<f64>,
}

impl OperationalScratch {
    pub(crate) fn new(p: &OperationalLayerParams, h: usize, w: usize) -> Self {
        let f = p.kernel_size();
        let padded_len = (h + f - 1) * (w + f - 1);
        Self {
            padded: vec![0.0; padded_len],
            dpadded: vec![0.0; padded_len],
            shifted: vec![0.0; h * w],
            prev: vec![0.0; h * w],
            ds: vec![0.0; h * w],
        }
    }
}

/// Output of an operational layer: shifts, Taylor powers, summed
/// correlations, per-order biases, then the activation.
pub fn operational_forward(x: &Tensor, p: &OperationalLayerParams) -> Result<Tensor> {
    let act = p.activation;
    Ok(p.preactivation(x)?.map(|z| act.apply(z)))
}

/// Interleaves zeros so that `x[c, i, j]` lands at `[c, 2i, 2j]`.
pub fn upsample_zero(x: &Tensor, stride: usize) -> Result<Tensor> {
    let (c, h, w) = x.dims3()?;
    if stride == 0 {
        return Err(arg_err!("stride must be positive"));
    }
    let (hh, ww) = (h * stride, w * stride);
    let mut out = vec![0.0; c * hh * ww];
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                out[ch * hh * ww + i * stride * ww + j * stride] = x.data()[ch * h * w + i * w + j];
            }
        }
    }
    Tensor::new(&[c, hh, ww], out)
}

/// Fractionally strided operational layer: zero-interleaved upsampling by
/// `stride` followed by a same-padded operational layer.
pub fn transposed_operational_forward(x: &Tensor, p: &OperationalLayerParams, stride: usize) -> Result<Tensor> {
    operational_forward(&upsample_zero(x, stride)?, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::activation::sigmoid;
    use crate::numerics::{bilinear_shift, conv2d_same};
    use crate::rng;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64, scale: f64) -> Tensor {
        let mut g = rng::stream(seed, rng::purpose::MISC, 4);
        Tensor::from_fn(shape, |_| g.gen_range(-scale..scale))
    }

    fn random_params(c_in: usize, c_out: usize, q: usize, seed: u64, act: Activation) -> OperationalLayerParams {
        OperationalLayerParams::from_parts(
            random(&[c_out, c_in, q, 3, 3], seed, 0.5),
            random(&[c_out, q], seed + 1, 0.5),
            random(&[c_out, 2], seed + 2, 1.5),
            act,
        )
        .unwrap()
    }

    fn plane(x: &Tensor, c: usize) -> Tensor {
        let (_, h, w) = x.dims3().unwrap();
        Tensor::new(&[h, w], x.row(c).to_vec()).unwrap()
    }

    #[test]
    fn first_order_without_shift_is_a_convolution_layer() {
        let x = random(&[3, 6, 7], 1, 1.0);
        let mut p = random_params(3, 4, 1, 2, Activation::Tanh);
        p.shifts = Tensor::zeros(&[4, 2]);
        let y = operational_forward(&x, &p).unwrap();
        for k in 0..4 {
            let mut acc = Tensor::filled(&[6, 7], p.biases.at(k, 0));
            for c in 0..3 {
                let kern = Tensor::new(&[3, 3], p.kernel(k, c, 0).to_vec()).unwrap();
                acc = acc.add(&conv2d_same(&plane(&x, c), &kern).unwrap()).unwrap();
            }
            for (a, b) in y.row(k).iter().zip(acc.data()) {
                assert!((a - libm::tanh(*b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scalar_taylor_sum() {
        let x = Tensor::new(&[1, 1, 1], alloc::vec![0.5]).unwrap();
        let p = OperationalLayerParams::from_parts(
            Tensor::new(&[1, 1, 2, 1, 1], alloc::vec![1.0, 2.0]).unwrap(),
            Tensor::zeros(&[1, 2]),
            Tensor::zeros(&[1, 2]),
            Activation::None,
        )
        .unwrap();
        assert_eq!(operational_forward(&x, &p).unwrap().data(), &[1.0]);
    }

    /// Direct per-pixel evaluation of the generative-neuron sum with a
    /// bilinear lookup at `(p + i - 1 + alpha, r + j - 1 + beta)`.
    fn triple_loop(x: &Tensor, p: &OperationalLayerParams) -> Tensor {
        let (c_in, h, w) = x.dims3().unwrap();
        let lookup = |c: usize, pr: f64, pc: f64| -> f64 {
            let get = |r: isize, cc: isize| {
                if r < 0 || cc < 0 || r >= h as isize || cc >= w as isize {
                    0.0
                } else {
                    x.data()[c * h * w + r as usize * w + cc as usize]
                }
            };
            let (r0, c0) = (pr.floor(), pc.floor());
            let (fr, fc) = (pr - r0, pc - c0);
            let (r0, c0) = (r0 as isize, c0 as isize);
            (1.0 - fr) * (1.0 - fc) * get(r0, c0)
                + (1.0 - fr) * fc * get(r0, c0 + 1)
                + fr * (1.0 - fc) * get(r0 + 1, c0)
                + fr * fc * get(r0 + 1, c0 + 1)
        };
        let q_max = p.order();
        let mut out = Tensor::zeros(&[p.c_out(), h, w]);
        for k in 0..p.c_out() {
            let (a, b) = (p.shifts.at(k, 0), p.shifts.at(k, 1));
            for pr in 0..h {
                for pc in 0..w {
                    let mut acc: f64 = (0..q_max).map(|q| p.biases.at(k, q)).sum();
                    for c in 0..c_in {
                        for q in 1..=q_max {
                            for i in 0..3 {
                                for j in 0..3 {
                                    let (sr, sc) = (pr as isize + i as isize - 1, pc as isize + j as isize - 1);
                                    // the kernel tap reads the shifted map, which is zero outside the grid
                                    let v = if sr < 0 || sc < 0 || sr >= h as isize || sc >= w as isize {
                                        0.0
                                    } else {
                                        lookup(c, sr as f64 + a, sc as f64 + b)
                                    };
                                    acc += p.kernel(k, c, q - 1)[i * 3 + j] * v.powi(q as i32);
                                }
                            }
                        }
                    }
                    out.data_mut()[(k * h + pr) * w + pc] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn matches_nested_summation_oracle() {
        let x = random(&[1, 8, 8], 3, 1.0);
        let mut p = random_params(1, 2, 3, 4, Activation::None);
        p.shifts = Tensor::from_rows(&[&[0.3, -0.7], &[-1.4, 0.9]]).unwrap();
        let fast = operational_forward(&x, &p).unwrap();
        let slow = triple_loop(&x, &p);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-10);
        }
        let x = random(&[3, 5, 6], 5, 1.0);
        let p = random_params(3, 2, 2, 6, Activation::None);
        let fast = operational_forward(&x, &p).unwrap();
        let slow = triple_loop(&x, &p);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn shifting_happens_before_powers() {
        let x = random(&[1, 5, 5], 7, 1.0);
        let mut p = OperationalLayerParams::zeros(1, 1, 2, 3, Activation::None).unwrap();
        // centre tap of the second-order kernel only
        p.weights.data_mut()[9 + 4] = 1.0;
        p.shifts = Tensor::from_rows(&[&[0.5, 0.25]]).unwrap();
        let y = operational_forward(&x, &p).unwrap();
        let expect = bilinear_shift(&plane(&x, 0), 0.5, 0.25).unwrap().map(|v| v * v);
        for (a, b) in y.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_channel_mismatch_and_non_finite() {
        let p = random_params(2, 3, 2, 8, Activation::Tanh);
        assert!(matches!(operational_forward(&Tensor::zeros(&[3, 4, 4]), &p), Err(Error::Shape(_))));
        let mut bad = p.clone();
        bad.weights.data_mut()[0] = f64::NAN;
        assert!(matches!(operational_forward(&Tensor::zeros(&[2, 4, 4]), &bad), Err(Error::NonFinite(_))));
        assert!(OperationalLayerParams::zeros(1, 1, 0, 3, Activation::None).is_err());
        assert!(OperationalLayerParams::zeros(1, 1, 1, 4, Activation::None).is_err());
    }

    #[test]
    fn permuting_neurons_permutes_outputs() {
        let x = random(&[2, 6, 6], 9, 1.0);
        let p = random_params(2, 3, 3, 10, Activation::Tanh);
        let perm = [2usize, 0, 1];
        let mut q = p.clone();
        let per_w = 2 * 3 * 9;
        for (dst, &src) in perm.iter().enumerate() {
            q.weights.data_mut()[dst * per_w..(dst + 1) * per_w].copy_from_slice(&p.weights.data()[src * per_w..(src + 1) * per_w]);
            q.biases.row_mut(dst).copy_from_slice(p.biases.row(src));
            q.shifts.row_mut(dst).copy_from_slice(p.shifts.row(src));
        }
        let y = operational_forward(&x, &p).unwrap();
        let z = operational_forward(&x, &q).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            assert_eq!(z.row(dst), y.row(src));
        }
    }

    #[test]
    fn higher_orders_zeroed_reduce_to_linear_layer() {
        let x = random(&[2, 5, 5], 11, 1.0);
        let mut p = random_params(2, 2, 3, 12, Activation::Tanh);
        let mut lin = OperationalLayerParams::zeros(2, 2, 1, 3, Activation::Tanh).unwrap();
        for k in 0..2 {
            for c in 0..2 {
                let base3 = ((k * 2 + c) * 3) * 9;
                let base1 = (k * 2 + c) * 9;
                lin.weights.data_mut()[base1..base1 + 9].copy_from_slice(&p.weights.data()[base3..base3 + 9]);
                p.weights.data_mut()[base3 + 9..base3 + 27].iter_mut().for_each(|v| *v = 0.0);
            }
            let bsum: f64 = p.biases.row(k).iter().sum();
            lin.biases.set(k, 0, bsum);
        }
        lin.shifts = p.shifts.clone();
        let a = operational_forward(&x, &p).unwrap();
        let b = operational_forward(&x, &lin).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_identity_kernel_upsamples() {
        let x = random(&[1, 3, 4], 13, 1.0);
        let mut p = OperationalLayerParams::zeros(1, 1, 1, 3, Activation::None).unwrap();
        p.weights.data_mut()[4] = 1.0;
        let y = transposed_operational_forward(&x, &p, 2).unwrap();
        assert_eq!(y.shape(), &[1, 6, 8]);
        for i in 0..6 {
            for j in 0..8 {
                let expect = if i % 2 == 0 && j % 2 == 0 { x.data()[(i / 2) * 4 + j / 2] } else { 0.0 };
                assert_eq!(y.data()[i * 8 + j], expect);
            }
        }
    }

    #[test]
    fn transposed_zero_input_gives_bias_offset() {
        let p = {
            let mut p = random_params(2, 2, 2, 14, Activation::Sigmoid);
            p.shifts = Tensor::zeros(&[2, 2]);
            p
        };
        let y = transposed_operational_forward(&Tensor::zeros(&[2, 3, 3]), &p, 2).unwrap();
        for k in 0..2 {
            let b: f64 = p.biases.row(k).iter().sum();
            assert!(y.row(k).iter().all(|&v| (v - sigmoid(b)).abs() < 1e-15));
        }
    }

    #[test]
    fn transposed_matches_scatter_reference() {
        // out(P,R) = sum_{i,j,q} x(i,j)^q * w_q(P - 2i + 1, R - 2j + 1) for zero shifts
        let (c_in, h, w, q) = (2, 3, 3, 2);
        let x = random(&[c_in, h, w], 15, 1.0);
        let mut p = random_params(c_in, 1, q, 16, Activation::None);
        p.shifts = Tensor::zeros(&[1, 2]);
        let fast = transposed_operational_forward(&x, &p, 2).unwrap();
        let (hh, ww) = (2 * h, 2 * w);
        let mut slow = alloc::vec![p.biases.row(0).iter().sum::<f64>(); hh * ww];
        for c in 0..c_in {
            for qi in 0..q {
                let kern = p.kernel(0, c, qi);
                for i in 0..h {
                    for j in 0..w {
                        let v = x.data()[c * h * w + i * w + j].powi(qi as i32 + 1);
                        for a in 0..3isize {
                            for b in 0..3isize {
                                let (pp, rr) = (2 * i as isize - a + 1, 2 * j as isize - b + 1);
                                if pp >= 0 && rr >= 0 && pp < hh as isize && rr < ww as isize {
                                    slow[pp as usize * ww + rr as usize] += kern[(a * 3 + b) as usize] * v;
                                }
                            }
                        }
                    }
                }
            }
        }
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
