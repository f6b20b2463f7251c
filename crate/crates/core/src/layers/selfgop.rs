use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, Result};
use crate::layers::Activation;
use crate::tensor::Tensor;

/// Dense layer of generative perceptrons: `act(sum_q W_q y^q + b_q)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfGopParams {
    /// `Q x n x m`
    pub weights: Tensor,
    /// `Q x n`
    pub biases: Tensor,
    pub activation: Activation,
}

impl SelfGopParams {
    pub fn zeros(m: usize, n: usize, order: usize, activation: Activation) -> Result<Self> {
        Self::from_parts(Tensor::zeros(&[order, n, m]), Tensor::zeros(&[order, n]), activation)
    }

    pub fn from_parts(weights: Tensor, biases: Tensor, activation: Activation) -> Result<Self> {
        let p = Self { weights, biases, activation };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.weights.shape();
        if s.len() != 3 {
            return Err(shape_err!("Self-GOP weights must be 3-D, got {:?}", s));
        }
        if s[0] == 0 {
            return Err(arg_err!("Taylor order must be at least 1"));
        }
        if s[1] <= s[2] {
            return Err(arg_err!("Self-GOP must expand: n = {} is not larger than m = {}", s[1], s[2]));
        }
        if self.biases.shape() != [s[0], s[1]] {
            return Err(shape_err!("biases {:?}, expected [{}, {}]", self.biases.shape(), s[0], s[1]));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn row(&self, qi: usize, i: usize) -> &[f64] {
        let (n, m) = (self.outputs(), self.inputs());
        &self.weights.data()[(qi * n + i) * m..(qi * n + i + 1) * m]
    }

    pub(crate) fn powers(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.order());
        for _ in 0..self.order() {
            let next = match out.last() {
                None => y.to_vec(),
                Some(prev) => prev.iter().zip(y).map(|(a, b)| a * b).collect(),
            };
            out.push(next);
        }
        out
    }

    /// Pre-activation of output `i`.
    pub(crate) fn unit(&self, powers: &[Vec<f64>], i: usize) -> f64 {
        let mut z = 0.0;
        for (qi, yq) in powers.iter().enumerate() {
            z += self.biases.at(qi, i);
            z += self.row(qi, i).iter().zip(yq).map(|(a, b)| a * b).sum::<f64>();
        }
        z
    }

    pub fn preactivation(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        if y.len() != self.inputs() {
            return Err(shape_err!("Self-GOP expects {} inputs, got {}", self.inputs(), y.len()));
        }
        let powers = self.powers(y);
        Ok((0..self.outputs()).map(|i| self.unit(&powers, i)).collect())
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub(crate) fn backward(&self, y: &[f64], dz: &[f64], grads: &mut SelfGopParams) -> Vec<f64> {
        let (n, m) = (self.outputs(), self.inputs());
        let powers = self.powers(y);
        let mut dy = vec![0.0; m];
        for (qi, yq) in powers.iter().enumerate() {
            let q = (qi + 1) as f64;
            let mut back = vec![0.0; m];
            for i in 0..n {
                let g = dz[i];
                if g == 0.0 {
                    continue;
                }
                let bi = grads.biases.data_mut();
                bi[qi * n + i] += g;
                let wrow = &mut grads.weights.data_mut()[(qi * n + i) * m..(qi * n + i + 1) * m];
                for (wv, yv) in wrow.iter_mut().zip(yq) {
                    *wv += g * yv;
                }
                for (bv, wv) in back.iter_mut().zip(self.row(qi, i)) {
                    *bv += g * wv;
                }
            }
            for j in 0..m {
                let lower = if qi == 0 { 1.0 } else { powers[qi - 1][j] };
                dy[j] += q * lower * back[j];
            }
        }
        dy
    }
}

/// `act(sum_{q=1..Q} W_q y^q + b_q)` for a measurement vector `y`.
pub fn selfgop_forward(y: &Tensor, p: &SelfGopParams) -> Result<Tensor> {
    let act = p.activation;
    let z = p.preactivation(y.data())?;
    Ok(Tensor::vector(z.into_iter().map(|v| act.apply(v)).collect()))
}
