use rand::Rng;

use crate::error::{arg_err, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Random piecewise-constant test image in `[0, 1]`: a large background
/// ellipse with a few smaller ellipses and rectangles painted on top.
pub fn piecewise_constant_phantom(side: usize, seed: u64) -> Result<Tensor> {
    if side < 4 {
        return Err(arg_err!("phantom side must be at least 4"));
    }
    let mut g = rng::stream(seed, rng::purpose::PHANTOM, side as u64);
    let mut img = Tensor::zeros(&[side, side]);
    let n = side as f64;
    let paint = |img: &mut Tensor, value: f64, inside: &dyn Fn(f64, f64) -> bool| {
        for p in 0..side {
            for r in 0..side {
                // Normalised pixel-centre coordinates in [-1, 1].
                let y = 2.0 * (p as f64 + 0.5) / n - 1.0;
                let x = 2.0 * (r as f64 + 0.5) / n - 1.0;
                if inside(x, y) {
                    img.set(p, r, value);
                }
            }
        }
    };
    let ellipse = |cx: f64, cy: f64, a: f64, b: f64, th: f64| {
        let (s, c) = (libm::sin(th), libm::cos(th));
        move |x: f64, y: f64| {
            let (dx, dy) = (x - cx, y - cy);
            let u = (c * dx + s * dy) / a;
            let v = (-s * dx + c * dy) / b;
            u * u + v * v <= 1.0
        }
    };
    paint(&mut img, g.gen_range(0.2..0.4), &ellipse(0.0, 0.0, 0.85, 0.7, g.gen_range(-0.3..0.3)));
    for _ in 0..4 {
        let e = ellipse(
            g.gen_range(-0.4..0.4),
            g.gen_range(-0.35..0.35),
            g.gen_range(0.1..0.35),
            g.gen_range(0.08..0.3),
            g.gen_range(0.0..core::f64::consts::PI),
        );
        paint(&mut img, g.gen_range(0.5..1.0), &e);
    }
    for _ in 0..2 {
        let (cx, cy) = (g.gen_range(-0.4..0.4), g.gen_range(-0.4..0.4));
        let (hx, hy) = (g.gen_range(0.05..0.2), g.gen_range(0.05..0.2));
        let v = g.gen_range(0.0..0.15);
        paint(&mut img, v, &move |x: f64, y: f64| (x - cx).abs() <= hx && (y - cy).abs() <= hy);
    }
    Ok(img)
}
