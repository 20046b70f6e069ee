//! Symmetric positive-definite factorization `A = L·D·Lᵀ`.
//!
//! `L` is unit lower triangular and `D` diagonal. A pivot that is not
//! comfortably positive means `A` is not (numerically) positive definite,
//! which is how indefiniteness is detected. The square-root-free form keeps
//! the routine usable without `std` math.

use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::DenseMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    /// Strictly lower part of `L`, row-major `n×n`; the unit diagonal is implicit.
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl LdlFactor {
    /// Factors a symmetric matrix; only the lower triangle is read.
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimMismatch { expected: a.rows(), found: a.cols() });
        }
        let n = a.rows();
        let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
        let tol = f64::EPSILON * (n.max(1) as f64) * max_diag;

        let mut lower = vec![0.0; n * n];
        let mut diag = vec![0.0; n];
        let mut scaled = vec![0.0; n];

        for j in 0..n {
            let row_j = &lower[j * n..j * n + j];

            let mut dj = a[(j, j)];
            for k in 0..j {
                scaled[k] = row_j[k] * diag[k];
                dj -= row_j[k] * scaled[k];
            }
            if dj <= tol || dj.is_nan() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: dj });
            }
            diag[j] = dj;

            for i in j + 1..n {
                let row_i = &lower[i * n..i * n + j];
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= row_i[k] * scaled[k];
                }
                lower[i * n + j] = s / dj;
            }
        }
        Ok(Self { n, lower, diag })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn pivots(&self) -> &[f64] {
        &self.diag
    }

    /// Ratio of the largest to the smallest pivot; a cheap conditioning proxy.
    pub fn cond_estimate(&self) -> f64 {
        let (lo, hi) = self
            .diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        if self.n == 0 {
            1.0
        } else {
            hi / lo
        }
    }

    /// Overwrites `b` with `L⁻¹·b`.
    fn forward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let mut s = b[i];
            for (l, y) in row.iter().zip(b.iter()) {
                s -= l * y;
            }
            b[i] = s;
        }
    }

    /// Overwrites `b` with `L⁻ᵀ·b`.
    fn backward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let bi = b[i];
            if bi != 0.0 {
                let row = &self.lower[i * n..i * n + i];
                for (y, l) in b.iter_mut().zip(row) {
                    *y -= l * bi;
                }
            }
        }
    }

    /// Solves `A·x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        self.forward(b);
        for (y, d) in b.iter_mut().zip(&self.diag) {
            *y /= d;
        }
        self.backward(b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `bᵀ·A⁻¹·b`, evaluated as `Σ yᵢ²/dᵢ` with `y = L⁻¹·b`.
    ///
    /// For a diagonal `A` this reduces to `Σ bᵢ²/aᵢᵢ` term by term.
    pub fn inv_quad_form(&self, b: &[f64]) -> f64 {
        let mut y = b.to_vec();
        self.forward(&mut y);
        y.iter().zip(&self.diag).map(|(y, d)| (y * y) / d).sum()
    }

    /// Full inverse, symmetrized so that it is exactly symmetric.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.n;
        let mut inv = DenseMatrix::zeros(n, n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let avg = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = avg;
                inv[(j, i)] = avg;
            }
        }
        inv
    }
}
