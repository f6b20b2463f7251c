use alloc::vec::Vec;

use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

/// Periodic forward differences of an `H x W` image: `gx` along rows
/// (`S[p+1, r] - S[p, r]`) and `gy` along columns (`S[p, r+1] - S[p, r]`).
pub fn grad(s: &Tensor) -> Result<(Tensor, Tensor)> {
    let (h, w) = s.dims2()?;
    let d = s.data();
    let mut gx = Vec::with_capacity(h * w);
    let mut gy = Vec::with_capacity(h * w);
    for p in 0..h {
        let down = (p + 1) % h;
        for r in 0..w {
            let right = (r + 1) % w;
            gx.push(d[down * w + r] - d[p * w + r]);
            gy.push(d[p * w + right] - d[p * w + r]);
        }
    }
    Ok((Tensor::new(&[h, w], gx)?, Tensor::new(&[h, w], gy)?))
}

/// Adjoint of [`grad`] (the negative divergence), so that
/// `<grad S, z> = <S, div z>`.
pub fn div(zx: &Tensor, zy: &Tensor) -> Result<Tensor> {
    let (h, w) = zx.dims2()?;
    zx.same_shape(zy)?;
    let (x, y) = (zx.data(), zy.data());
    let mut out = Vec::with_capacity(h * w);
    for p in 0..h {
        let up = (p + h - 1) % h;
        for r in 0..w {
            let left = (r + w - 1) % w;
            out.push(x[up * w + r] - x[p * w + r] + y[p * w + left] - y[p * w + r]);
        }
    }
    Tensor::new(&[h, w], out)
}

/// Binary masks of the positions where `|grad S| > tol`, per direction.
pub fn gradient_support(s: &Tensor, tol: f64) -> Result<(Tensor, Tensor)> {
    if !(tol >= 0.0) {
        return Err(arg_err!("tolerance must be non-negative"));
    }
    let (gx, gy) = grad(s)?;
    let ind = |v: f64| if v.abs() > tol { 1.0 } else { 0.0 };
    Ok((gx.map(ind), gy.map(ind)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn constant_image_has_no_gradient() {
        let (gx, gy) = grad(&Tensor::filled(&[5, 7], 3.2)).unwrap();
        assert!(gx.data().iter().chain(gy.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn step_image_responds_at_step_and_wrap() {
        let s = Tensor::from_fn(&[4, 6], |i| if i % 6 >= 3 { 1.0 } else { 0.0 });
        let (gx, gy) = grad(&s).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        for p in 0..4 {
            for r in 0..6 {
                let expect = match r {
                    2 => 1.0,
                    5 => -1.0,
                    _ => 0.0,
                };
                assert_eq!(gy.at(p, r), expect);
            }
        }
    }

    #[test]
    fn adjoint_identity_on_8x8() {
        let mut g = rng::stream(1, rng::purpose::MISC, 0);
        let s = Tensor::from_fn(&[8, 8], |_| g.gen_range(-1.0..1.0));
        let zx = Tensor::from_fn(&[8, 8], |_| g.gen_range(-1.0..1.0));
        let zy = Tensor::from_fn(&[8, 8], |_| g.gen_range(-1.0..1.0));
        let (gx, gy) = grad(&s).unwrap();
        let lhs = gx.dot(&zx).unwrap() + gy.dot(&zy).unwrap();
        let rhs = s.dot(&div(&zx, &zy).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn support_of_step() {
        let s = Tensor::from_fn(&[3, 4], |i| if i / 4 == 1 { 2.0 } else { 0.0 });
        let (mx, my) = gradient_support(&s, 1e-9).unwrap();
        assert_eq!(mx.data().iter().sum::<f64>(), 8.0);
        assert_eq!(my.data().iter().sum::<f64>(), 0.0);
    }

    proptest! {
        #[test]
        fn adjointness(h in 1usize..7, w in 1usize..7, seed in 0u64..500) {
            let mut g = rng::stream(seed, rng::purpose::MISC, 1);
            let s = Tensor::from_fn(&[h, w], |_| g.gen_range(-1.0..1.0));
            let zx = Tensor::from_fn(&[h, w], |_| g.gen_range(-1.0..1.0));
            let zy = Tensor::from_fn(&[h, w], |_| g.gen_range(-1.0..1.0));
            let (gx, gy) = grad(&s).unwrap();
            let lhs = gx.dot(&zx).unwrap() + gy.dot(&zy).unwrap();
            let rhs = s.dot(&div(&zx, &zy).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
