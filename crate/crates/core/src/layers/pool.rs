use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

/// Flat input index chosen by each pooled output, in output order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaxPoolIndices(pub Vec<usize>);

/// Non-overlapping 2x2 max pooling. Ties resolve to the first element in
/// row-major order within the window.
pub fn maxpool2(x: &Tensor) -> Result<(Tensor, MaxPoolIndices)> {
    let (c, h, w) = x.dims3()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(arg_err!("max pooling needs even extents, got {}x{}", h, w));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    let d = x.data();
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let base = ch * h * w;
                let mut best = base + 2 * i * w + 2 * j;
                for &(di, dj) in &[(0, 1), (1, 0), (1, 1)] {
                    let cand = base + (2 * i + di) * w + 2 * j + dj;
                    if d[cand] > d[best] {
                        best = cand;
                    }
                }
                out.push(d[best]);
                idx.push(best);
            }
        }
    }
    Ok((Tensor::new(&[c, oh, ow], out)?, MaxPoolIndices(idx)))
}

pub(crate) fn maxpool2_backward(g: &[f64], idx: &MaxPoolIndices, input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (gv, &i) in g.iter().zip(&idx.0) {
        dx[i] += gv;
    }
    dx
}

/// Block averages over `(gh, gw)` tiles of an `h x w` plane, row-major.
pub fn avgpool_groups(v: &[f64], h: usize, w: usize, group: (usize, usize)) -> Result<Vec<f64>> {
    let (gh, gw) = group;
    if gh == 0 || gw == 0 || h % gh != 0 || w % gw != 0 {
        return Err(arg_err!("group {}x{} does not tile a {}x{} map", gh, gw, h, w));
    }
    if v.len() != h * w {
        return Err(arg_err!("map has {} values, expected {}", v.len(), h * w));
    }
    let (bh, bw) = (h / gh, w / gw);
    let mut out = vec![0.0; bh * bw];
    let inv = 1.0 / (gh * gw) as f64;
    for r in 0..h {
        for c in 0..w {
            out[(r / gh) * bw + c / gw] += v[r * w + c] * inv;
        }
    }
    Ok(out)
}

pub(crate) fn avgpool_groups_backward(g: &[f64], h: usize, w: usize, group: (usize, usize)) -> Vec<f64> {
    let (gh, gw) = group;
    let bw = w / gw;
    let inv = 1.0 / (gh * gw) as f64;
    (0..h * w).map(|i| g[(i / w / gh) * bw + (i % w) / gw] * inv).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| libm::exp(v - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Class probabilities from a 2-D support map whose classes occupy
/// contiguous `(gh, gw)` blocks.
pub fn grouped_avgpool_softmax(v: &Tensor, group: (usize, usize)) -> Result<Tensor> {
    let (h, w) = v.dims2()?;
    Ok(Tensor::vector(softmax(&avgpool_groups(v.data(), h, w, group)?)))
}
