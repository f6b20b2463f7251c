use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, shape_err, Result};
use crate::sparse::problem::{denoiser, ProxyKind};
use crate::tensor::Tensor;
use crate::training::ClassGroups;

const NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CrcResult {
    pub label: usize,
    pub residuals: Vec<f64>,
}

/// Collaborative representation classifier with a precomputed ridge
/// projection `(D^T D + lambda I)^-1 D^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct CrcClassifier {
    d: Tensor,
    labels: Vec<usize>,
    classes: usize,
    projection: Tensor,
}

fn unit_norm(v: &[f64]) -> bool {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    (n - 1.0).abs() <= NORM_TOL
}

impl CrcClassifier {
    /// `labels[j]` is the class of column `j` of `d`; classes are `0..k`.
    pub fn new(d: &Tensor, labels: &[usize], lambda: f64) -> Result<Self> {
        let (_, n) = d.dims2()?;
        if labels.len() != n {
            return Err(shape_err!("{} labels for {} atoms", labels.len(), n));
        }
        let dt = d.transpose()?;
        if let Some(j) = (0..n).find(|&j| !unit_norm(dt.row(j))) {
            return Err(arg_err!("dictionary column {} is not unit-norm", j));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self { d: d.clone(), labels: labels.to_vec(), classes, projection: denoiser(d, ProxyKind::Lmmse(lambda))? })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Ridge code of `y`.
    pub fn code(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.projection.matvec(y)
    }

    pub fn classify(&self, y: &[f64]) -> Result<CrcResult> {
        if !unit_norm(y) {
            return Err(arg_err!("query is not unit-norm"));
        }
        let x = self.code(y)?;
        let (m, n) = self.d.dims2()?;
        let mut recon = vec![vec![0.0; m]; self.classes];
        for i in 0..m {
            let row = self.d.row(i);
            for j in 0..n {
                recon[self.labels[j]][i] += row[j] * x[j];
            }
        }
        let residuals: Vec<f64> = recon.iter().map(|r| libm::sqrt(r.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum::<f64>())).collect();
        // residuals equal to rounding error count as ties
        let mut label = 0;
        for (i, &e) in residuals.iter().enumerate() {
            if e < residuals[label] - 1e-12 * residuals[label].max(1.0) {
                label = i;
            }
        }
        Ok(CrcResult { label, residuals })
    }
}

/// Classifies `y` by the class whose atoms best reconstruct it from the
/// ridge code. Ties, up to rounding, resolve to the lower class index.
pub fn crc_classify(d: &Tensor, y: &[f64], lambda: f64, labels: &[usize]) -> Result<CrcResult> {
    CrcClassifier::new(d, labels, lambda)?.classify(y)
}

/// Projected, unit-norm dictionary whose columns, read as a 2-D map, place
/// every class in its own contiguous block.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassDictionary {
    pub d: Tensor,
    pub labels: Vec<usize>,
    pub groups: ClassGroups,
}

/// `class_samples[c]` holds the atoms of class `c` as rows (`a x d`); `a`
/// must equal the block area. Blocks are laid out `block_rows` high.
pub fn build_classification_dictionary(
    class_samples: &[Tensor],
    a: &Tensor,
    group: (usize, usize),
    block_rows: usize,
) -> Result<ClassDictionary> {
    let k = class_samples.len();
    let (gh, gw) = group;
    if k == 0 || block_rows == 0 || k % block_rows != 0 {
        return Err(arg_err!("{} classes cannot fill {} block rows", k, block_rows));
    }
    let groups = ClassGroups::new(block_rows * gh, (k / block_rows) * gw, gh, gw)?;
    let (m, dim) = a.dims2()?;
    let mut projected = Vec::with_capacity(k);
    for (c, s) in class_samples.iter().enumerate() {
        let (count, sd) = s.dims2()?;
        if count != gh * gw || sd != dim {
            return Err(shape_err!("class {} has {}x{} samples, expected {}x{}", c, count, sd, gh * gw, dim));
        }
        projected.push(s.matmul(&a.transpose()?)?);
    }
    let n = groups.height * groups.width;
    let mut d = Tensor::zeros(&[m, n]);
    let mut labels = Vec::with_capacity(n);
    for p in 0..n {
        let class = groups.class_of(p);
        let (r, c) = (p / groups.width, p % groups.width);
        let atom = (r % gh) * gw + c % gw;
        let col = projected[class].row(atom);
        let norm = libm::sqrt(col.iter().map(|v| v * v).sum::<f64>());
        if norm == 0.0 {
            return Err(arg_err!("atom {} of class {} projects to zero", atom, class));
        }
        for i in 0..m {
            d.set(i, p, col[i] / norm);
        }
        labels.push(class);
    }
    Ok(ClassDictionary { d, labels, groups })
}
