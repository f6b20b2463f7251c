use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;


use crate::error::{arg_err, shape_err, Error, Result};
use crate::numerics::Fft2;
use crate::rng;
use crate::tensor::{ComplexTensor, Tensor};

/// Set of sampled 2-D frequencies of an `n_side x n_side` image, kept in
/// lexicographic order. Frequency `(i, j)` lives in FFT bin
/// `(i mod n, j mod n)`; `i` indexes rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FourierSamplingMask {
    omega: Vec<(i64, i64)>,
    n_side: usize,
    seed: u64,
    ball: usize,
}

/// Half-width of the admissible square `{-n/4, ..., n/4}^2`.
fn half_width(n_side: usize) -> i64 {
    (n_side / 4) as i64
}

fn ball_radius_sq(m: usize) -> f64 {
    (m as f64 / 3.0) / core::f64::consts::PI
}

impl FourierSamplingMask {
    /// Builds a mask from arbitrary frequencies; they must be distinct and
    /// inside the admissible square.
    pub fn from_frequencies(n_side: usize, seed: u64, freqs: &[(i64, i64)]) -> Result<Self> {
        if n_side == 0 {
            return Err(arg_err!("image side must be positive"));
        }
        let hw = half_width(n_side);
        let mut set = BTreeSet::new();
        for &(i, j) in freqs {
            if i.abs() > hw || j.abs() > hw {
                return Err(arg_err!("frequency ({}, {}) outside the admissible square of half-width {}", i, j, hw));
            }
            if !set.insert((i, j)) {
                return Err(arg_err!("duplicate frequency ({}, {})", i, j));
            }
        }
        let r2 = ball_radius_sq(set.len());
        let ball = set.iter().filter(|(i, j)| ((i * i + j * j) as f64) < r2).count();
        Ok(Self { omega: set.into_iter().collect(), n_side, seed, ball })
    }

    pub fn omega(&self) -> &[(i64, i64)] {
        &self.omega
    }

    pub fn m(&self) -> usize {
        self.omega.len()
    }

    pub fn n_side(&self) -> usize {
        self.n_side
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of sampled frequencies inside the centred ball.
    pub fn ball_count(&self) -> usize {
        self.ball
    }

    pub fn rate(&self) -> f64 {
        self.m() as f64 / (self.n_side * self.n_side) as f64
    }

    /// Row-major FFT bin of every sampled frequency, in mask order.
    pub fn bins(&self) -> Vec<usize> {
        let n = self.n_side as i64;
        self.omega.iter().map(|&(i, j)| (i.rem_euclid(n) * n + j.rem_euclid(n)) as usize).collect()
    }

    /// 0/1 indicator over the FFT grid.
    pub fn indicator(&self) -> Tensor {
        let mut t = Tensor::zeros(&[self.n_side, self.n_side]);
        for b in self.bins() {
            t.data_mut()[b] = 1.0;
        }
        t
    }

    /// Picks the sampled coefficients out of a full spectrum.
    pub fn sample(&self, spectrum: &ComplexTensor) -> Result<ComplexTensor> {
        if spectrum.shape() != [self.n_side, self.n_side] {
            return Err(shape_err!("spectrum {:?} does not match mask side {}", spectrum.shape(), self.n_side));
        }
        let data = self.bins().into_iter().map(|b| spectrum.data()[b]).collect();
        ComplexTensor::new(&[self.m()], data)
    }

    /// Places measurements on an otherwise zero spectrum grid.
    pub fn scatter(&self, y: &ComplexTensor) -> Result<ComplexTensor> {
        if y.len() != self.m() {
            return Err(shape_err!("{} measurements for a mask of {} frequencies", y.len(), self.m()));
        }
        let mut grid = ComplexTensor::zeros(&[self.n_side, self.n_side]);
        for (b, v) in self.bins().into_iter().zip(y.data()) {
            grid.data_mut()[b] = *v;
        }
        Ok(grid)
    }

    /// Text form: a `n_side m seed` header, then one `i j` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.n_side, self.m(), self.seed);
        for (i, j) in &self.omega {
            let _ = writeln!(s, "{} {}", i, j);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Decode("empty mask file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let parse = |s: &str| s.parse::<u64>().map_err(|_| Error::Decode(alloc::format!("bad header field {:?}", s)));
        if h.len() != 3 {
            return Err(Error::Decode(alloc::format!("header needs 3 fields, got {:?}", header)));
        }
        let (n_side, m, seed) = (parse(h[0])? as usize, parse(h[1])? as usize, parse(h[2])?);
        let mut freqs = Vec::with_capacity(m);
        for (k, line) in lines.enumerate() {
            let mut it = line.split_whitespace().map(|v| v.parse::<i64>());
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => freqs.push((i, j)),
                _ => return Err(Error::Decode(alloc::format!("bad frequency line {}: {:?}", k + 2, line))),
            }
        }
        if freqs.len() != m {
            return Err(Error::Decode(alloc::format!("header promises {} frequencies, found {}", m, freqs.len())));
        }
        Self::from_frequencies(n_side, seed, &freqs).map_err(|e| Error::Decode(alloc::format!("{}", e)))
    }
}

/// Samples `m` frequencies: every lattice point strictly inside the ball of
/// radius `sqrt(m / (3 pi))`, then rounded Gaussian draws (standard
/// deviation `n_side / 8`) until `m` distinct admissible points are held.
pub fn semi_random_mask(n_side: usize, m: usize, seed: u64) -> Result<FourierSamplingMask> {
    if n_side == 0 {
        return Err(arg_err!("image side must be positive"));
    }
    let hw = half_width(n_side);
    let side = (2 * hw + 1) as usize;
    if m > side * side {
        return Err(arg_err!("{} samples requested but the admissible square holds {}", m, side * side));
    }
    let r2 = ball_radius_sq(m);
    let mut set = BTreeSet::new();
    for i in -hw..=hw {
        for j in -hw..=hw {
            if ((i * i + j * j) as f64) < r2 {
                set.insert((i, j));
            }
        }
    }
    if set.len() > m {
        return Err(arg_err!("ball holds {} points, more than the {} requested", set.len(), m));
    }
    let sigma = n_side as f64 / 8.0;
    let mut g = rng::stream(seed, rng::purpose::MASK, n_side as u64);
    while set.len() < m {
        let i = libm::round(sigma * rng::normal(&mut g)) as i64;
        let j = libm::round(sigma * rng::normal(&mut g)) as i64;
        if i.abs() <= hw && j.abs() <= hw {
            set.insert((i, j));
        }
    }
    let freqs: Vec<(i64, i64)> = set.into_iter().collect();
    FourierSamplingMask::from_frequencies(n_side, seed, &freqs)
}

/// Unitary DFT of `s` sampled on the mask.
pub fn measure_image(s: &Tensor, mask: &FourierSamplingMask) -> Result<ComplexTensor> {
    let (h, w) = s.dims2()?;
    if h != mask.n_side() || w != mask.n_side() {
        return Err(shape_err!("image {}x{} does not match mask side {}", h, w, mask.n_side()));
    }
    let mut spec = ComplexTensor::from_real(s);
    Fft2::new(h, w).forward_inplace(spec.data_mut());
    mask.sample(&spec)
}

/// Inverse unitary DFT of the zero-filled spectrum, real part.
pub fn zero_filling(y: &ComplexTensor, mask: &FourierSamplingMask) -> Result<Tensor> {
    let mut grid = mask.scatter(y)?;
    let n = mask.n_side();
    Fft2::new(n, n).inverse_inplace(grid.data_mut());
    Ok(grid.real())
}
