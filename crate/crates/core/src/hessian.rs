//! The layer statistic `G = 2·x·xᵀ`, its dampening and its inverse.

use alloc::vec::Vec;

use crate::linalg::LdlFactor;
use crate::matrix::DenseMatrix;
use crate::{Error, Result};

/// Damped layer statistic and its full inverse, fixed for one layer.
#[derive(Debug, Clone)]
pub struct HessianState {
    g: DenseMatrix,
    g_inv: DenseMatrix,
    gamma_rel: f64,
    gamma_abs: f64,
}

impl HessianState {
    #[inline]
    pub fn dim(&self) -> usize {
        self.g.rows()
    }

    /// `2·x·xᵀ + γ_abs·I`.
    pub fn g(&self) -> &DenseMatrix {
        &self.g
    }

    pub fn g_inv(&self) -> &DenseMatrix {
        &self.g_inv
    }

    pub fn gamma_rel(&self) -> f64 {
        self.gamma_rel
    }

    pub fn gamma_abs(&self) -> f64 {
        self.gamma_abs
    }

    /// `G` with the dampening removed, i.e. the raw `2·x·xᵀ`.
    pub fn g_raw(&self) -> DenseMatrix {
        let mut raw = self.g.clone();
        for i in 0..raw.rows() {
            raw[(i, i)] -= self.gamma_abs;
        }
        raw
    }
}

/// Streaming accumulator for `Σ_b 2·x_b·x_bᵀ`.
#[derive(Debug, Clone)]
pub struct HessianAccumulator {
    dim: usize,
    upper: DenseMatrix,
    batches: usize,
    samples: usize,
}

impl HessianAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { dim, upper: DenseMatrix::zeros(dim, dim), batches: 0, samples: 0 }
    }

    pub fn add_batch(&mut self, x: &DenseMatrix) -> Result<()> {
        if x.rows() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: x.rows() });
        }
        let m = self.dim;
        for i in 0..m {
            let xi = x.row(i);
            for j in i..m {
                let xj = x.row(j);
                let dot: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum();
                self.upper[(i, j)] += 2.0 * dot;
            }
        }
        self.batches += 1;
        self.samples += x.cols();
        Ok(())
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    /// Number of calibration columns seen so far.
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn finish(self) -> Result<DenseMatrix> {
        if self.batches == 0 {
            return Err(Error::NoCalibration);
        }
        let mut g = self.upper;
        for i in 0..self.dim {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        Ok(g)
    }
}

/// `Σ_b 2·x_b·x_bᵀ` over calibration batches that share their row count.
pub fn accumulate<'a, I>(batches: I) -> Result<DenseMatrix>
where
    I: IntoIterator<Item = &'a DenseMatrix>,
{
    let mut iter = batches.into_iter();
    let first = iter.next().ok_or(Error::NoCalibration)?;
    let mut acc = HessianAccumulator::new(first.rows());
    acc.add_batch(first)?;
    for x in iter {
        acc.add_batch(x)?;
    }
    acc.finish()
}

/// Adds `γ_abs·I` with `γ_abs = gamma_rel · mean(diag(G_raw))` and inverts.
pub fn dampen(g_raw: &DenseMatrix, gamma_rel: f64) -> Result<HessianState> {
    if !g_raw.is_square() {
        return Err(Error::DimMismatch { expected: g_raw.rows(), found: g_raw.cols() });
    }
    if !(gamma_rel >= 0.0 && gamma_rel.is_finite()) {
        return Err(Error::InvalidConfig("dampening ratio must be finite and non-negative"));
    }
    if !g_raw.is_finite() {
        return Err(Error::InvalidConfig("layer statistic contains non-finite entries"));
    }
    let asymmetry = g_raw.asymmetry();
    if asymmetry > 1e-12 {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let m = g_raw.rows();
    let mean_diag = if m == 0 { 0.0 } else { (0..m).map(|i| g_raw[(i, i)]).sum::<f64>() / m as f64 };
    let gamma_abs = gamma_rel * mean_diag;

    let mut g = g_raw.clone();
    for i in 0..m {
        g[(i, i)] += gamma_abs;
    }
    let g_inv = LdlFactor::new(&g)?.inverse();
    Ok(HessianState { g, g_inv, gamma_rel, gamma_abs })
}

pub(crate) fn validate_indices(cols: &[usize], bound: usize) -> Result<()> {
    let increasing = cols.windows(2).all(|w| w[0] < w[1]);
    if cols.is_empty() || !increasing || cols.last().is_some_and(|&c| c >= bound) {
        return Err(Error::InvalidIndices { bound });
    }
    Ok(())
}

/// Factors the principal submatrix `Ginv[P,P]`, extracted by index selection.
pub(crate) fn factor_sub_inverse(h: &HessianState, cols: &[usize]) -> Result<LdlFactor> {
    let block = h.g_inv.select(cols, cols);
    LdlFactor::new(&block).map_err(|e| match e {
        Error::NotPositiveDefinite { value, .. } => {
            let max_diag = cols.iter().fold(0.0f64, |m, &c| m.max(h.g_inv[(c, c)]));
            let cond_estimate = if value > 0.0 { max_diag / value } else { f64::INFINITY };
            Error::SingularSubmatrix { cond_estimate }
        }
        other => other,
    })
}

/// Inverse of the principal submatrix `Ginv[P,P]` for strictly increasing `cols`.
pub fn sub_inverse(h: &HessianState, cols: &[usize]) -> Result<DenseMatrix> {
    validate_indices(cols, h.dim())?;
    Ok(factor_sub_inverse(h, cols)?.inverse())
}

/// Diagonal of `Ginv`.
pub(crate) fn inv_diagonal(h: &HessianState) -> Vec<f64> {
    (0..h.dim()).map(|j| h.g_inv[(j, j)]).collect()
}
