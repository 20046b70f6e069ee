//! Brute-force references for certifying the closed-form solver.
//!
//! The row problem is solved in primal form: with `δ_P = −w_P` fixed, the
//! free coordinates `U` solve `G[U,U]·δ_U = −G[U,P]·δ_P`. This uses `G`
//! directly (not its inverse) and a pivoted LU solve, so it shares no
//! numerical path with the closed form.

use alloc::vec;
use alloc::vec::Vec;

use crate::combinations::{binomial, Combinations};
use crate::matrix::{half_quad_form, DenseMatrix};
use crate::{Error, Result};

/// Default enumeration budget for [`exhaustive_best_mask`].
pub const DEFAULT_SUBSET_LIMIT: u128 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    NormalEquations,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub delta: Vec<f64>,
    /// `½·δ·G·δᵀ`.
    pub error: f64,
    pub method: OracleMethod,
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
fn lu_solve(mut a: DenseMatrix, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a.max_abs();
    for k in 0..n {
        let (piv, piv_val) = (k..n)
            .map(|i| (i, a[(i, k)].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_val <= f64::EPSILON * scale * n as f64 || piv_val.is_nan() {
            let cond_estimate = if piv_val > 0.0 { scale / piv_val } else { f64::INFINITY };
            return Err(Error::SingularSubmatrix { cond_estimate });
        }
        if piv != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(piv, j)];
                a[(piv, j)] = tmp;
            }
            b.swap(k, piv);
        }
        for i in k + 1..n {
            let f = a[(i, k)] / a[(k, k)];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                a[(i, j)] -= f * a[(k, j)];
            }
            b[i] -= f * b[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[(i, j)] * b[j];
        }
        b[i] = s / a[(i, i)];
    }
    Ok(b)
}

/// Minimizes `½·δ·G·δᵀ` subject to `δ[p] = −w[p]` for every `p` in `pruned`.
pub fn row_least_squares(w_row: &[f64], pruned: &[usize], g: &DenseMatrix) -> Result<OracleResult> {
    let m = g.rows();
    if !g.is_square() || w_row.len() != m {
        return Err(Error::DimMismatch { expected: m, found: w_row.len() });
    }
    if !pruned.is_empty() {
        crate::hessian::validate_indices(pruned, m)?;
    }
    let mut is_pruned = vec![false; m];
    pruned.iter().for_each(|&p| is_pruned[p] = true);
    let free: Vec<usize> = (0..m).filter(|&j| !is_pruned[j]).collect();

    let mut delta = vec![0.0; m];
    for &p in pruned {
        delta[p] = -w_row[p];
    }
    if !free.is_empty() && !pruned.is_empty() {
        let rhs: Vec<f64> = free
            .iter()
            .map(|&u| -pruned.iter().map(|&p| g[(u, p)] * delta[p]).sum::<f64>())
            .collect();
        let solution = lu_solve(g.select(&free, &free), rhs)?;
        for (&u, v) in free.iter().zip(solution) {
            delta[u] = v;
        }
    }
    let error = half_quad_form(g, &delta, 0.0);
    Ok(OracleResult { delta, error, method: OracleMethod::NormalEquations })
}

/// Globally best `k`-subset of a row by exhaustive enumeration.
///
/// Ties keep the lexicographically first subset.
pub fn exhaustive_best_mask(
    w_row: &[f64],
    g: &DenseMatrix,
    k: usize,
    limit: u128,
) -> Result<(Vec<usize>, OracleResult)> {
    let m = g.rows();
    if k > m {
        return Err(Error::InvalidConfig("cannot prune more weights than the row holds"));
    }
    let count = binomial(m, k);
    if count > limit {
        return Err(Error::TooManyCombinations { count, limit });
    }
    let mut best: Option<(Vec<usize>, OracleResult)> = None;
    for subset in Combinations::new(m, k) {
        let res = row_least_squares(w_row, &subset, g)?;
        match &best {
            Some((_, b)) if res.error >= b.error || res.error.is_nan() => {}
            _ => best = Some((subset, res)),
        }
    }
    let (subset, mut res) = best.ok_or(Error::InvalidConfig("empty candidate set"))?;
    res.method = OracleMethod::Exhaustive;
    Ok((subset, res))
}
