//! Weight updates for a fixed mask.
//!
//! For a row `w` whose positions `P` must become zero, the update that
//! minimizes `½·δ·G·δᵀ` is
//!
//! ```text
//! δ = −w_P · (Ginv[P,P])⁻¹ · Ginv[P,:]
//! ```
//!
//! with minimal value `½·w_P·(Ginv[P,P])⁻¹·w_Pᵀ`. Rows are independent.
//! `Ginv[P,P]` and `Ginv[P,:]` are taken by indexing, never by multiplying
//! with selection matrices.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::hessian::{factor_sub_inverse, validate_indices, HessianState};
use crate::mask::PruneMask;
use crate::matrix::DenseMatrix;
use crate::par::map_rows;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RowCompensation {
    pub row: usize,
    /// Update for the whole row; equals `−w[p]` on every pruned `p`.
    pub delta: Vec<f64>,
    pub predicted_loss: f64,
}

/// `½·w_P·(Ginv[P,P])⁻¹·w_Pᵀ`: the smallest achievable loss when `cols` are removed.
pub fn subset_loss(w_row: &[f64], cols: &[usize], h: &HessianState) -> Result<f64> {
    validate_indices(cols, h.dim())?;
    let factor = factor_sub_inverse(h, cols)?;
    let w_p: Vec<f64> = cols.iter().map(|&c| w_row[c]).collect();
    Ok(0.5 * factor.inv_quad_form(&w_p))
}

pub fn compensate_mrp_row(
    row: usize,
    w_row: &[f64],
    pruned: &[usize],
    h: &HessianState,
) -> Result<RowCompensation> {
    let m = h.dim();
    if w_row.len() != m {
        return Err(Error::DimMismatch { expected: m, found: w_row.len() });
    }
    if pruned.is_empty() {
        return Ok(RowCompensation { row, delta: vec![0.0; m], predicted_loss: 0.0 });
    }
    validate_indices(pruned, m)?;

    let factor = factor_sub_inverse(h, pruned)?;
    let w_p: Vec<f64> = pruned.iter().map(|&c| w_row[c]).collect();
    let predicted_loss = 0.5 * factor.inv_quad_form(&w_p);
    let multipliers = factor.solve(&w_p);

    let g_inv = h.g_inv();
    let mut delta = vec![0.0; m];
    for (&p, &lambda) in pruned.iter().zip(&multipliers) {
        if lambda == 0.0 {
            continue;
        }
        for (d, &g) in delta.iter_mut().zip(g_inv.row(p)) {
            *d -= lambda * g;
        }
    }
    for &p in pruned {
        delta[p] = -w_row[p];
    }
    Ok(RowCompensation { row, delta, predicted_loss })
}

fn check_shapes(w: &DenseMatrix, mask: &PruneMask, h: &HessianState) -> Result<()> {
    if w.cols() != h.dim() {
        return Err(Error::DimMismatch { expected: h.dim(), found: w.cols() });
    }
    if mask.cols() != w.cols() || mask.rows() != w.rows() {
        return Err(Error::DimMismatch { expected: w.rows() * w.cols(), found: mask.rows() * mask.cols() });
    }
    Ok(())
}

/// Optimal update `δw` for every row; rows with an empty mask get zeros.
pub fn compensate_mrp(w: &DenseMatrix, mask: &PruneMask, h: &HessianState) -> Result<DenseMatrix> {
    check_shapes(w, mask, h)?;
    let rows = map_rows(w.rows(), |r| compensate_mrp_row(r, w.row(r), mask.row(r), h));
    let mut delta = DenseMatrix::zeros(w.rows(), w.cols());
    for comp in rows {
        let comp = comp?;
        delta.row_mut(comp.row).copy_from_slice(&comp.delta);
    }
    Ok(delta)
}

/// Sum of the per-row optimal losses for `mask`.
pub fn predicted_loss_total(w: &DenseMatrix, mask: &PruneMask, h: &HessianState) -> Result<f64> {
    check_shapes(w, mask, h)?;
    let rows = map_rows(w.rows(), |r| {
        let cols = mask.row(r);
        if cols.is_empty() {
            Ok(0.0)
        } else {
            subset_loss(w.row(r), cols, h)
        }
    });
    rows.into_iter().try_fold(0.0, |acc, l| Ok(acc + l?))
}

/// `w += δw`, then writes exact zeros into the masked positions.
pub fn apply_compensation(w: &mut DenseMatrix, delta: &DenseMatrix, mask: &PruneMask) -> Result<()> {
    if w.shape() != delta.shape() {
        return Err(Error::DimMismatch { expected: w.rows() * w.cols(), found: delta.rows() * delta.cols() });
    }
    for (v, d) in w.as_mut_slice().iter_mut().zip(delta.as_slice()) {
        *v += d;
    }
    mask.snap(w);
    Ok(())
}

/// Applies the optimal update in place to the rows flagged in `active`,
/// returning the summed predicted loss.
pub(crate) fn mrp_update_rows(
    w: &mut DenseMatrix,
    mask: &PruneMask,
    h: &HessianState,
    active: &[bool],
) -> Result<f64> {
    check_shapes(w, mask, h)?;
    let snapshot = &*w;
    let rows = map_rows(w.rows(), |r| {
        if active[r] {
            compensate_mrp_row(r, snapshot.row(r), mask.row(r), h).map(Some)
        } else {
            Ok(None)
        }
    });
    let mut loss = 0.0;
    let mut updates = Vec::new();
    for comp in rows {
        if let Some(c) = comp? {
            loss += c.predicted_loss;
            updates.push(c);
        }
    }
    for c in updates {
        // delta[p] = −w[p] on masked positions, so they land on exact zeros
        for (v, d) in w.row_mut(c.row).iter_mut().zip(&c.delta) {
            *v += d;
        }
    }
    Ok(loss)
}

/// Sequential single-removal baseline over the columns in `range`.
///
/// Columns are visited left to right. Each pruned weight `w[q][j]` is removed
/// with `c = w[q][j] / Ginv[j][j]` and `w[q][j'] −= c·Ginv[j][j']` for
/// `j' ≥ j`; columns left of `j` stay frozen. `Ginv` is never downdated.
/// Returns the sum of the single-removal losses `½·w[q][j]²/Ginv[j][j]`
/// evaluated at the moment each weight is removed.
pub fn compensate_sequential_s(
    w: &mut DenseMatrix,
    fragment: &PruneMask,
    h: &HessianState,
    range: Range<usize>,
) -> Result<f64> {
    check_shapes(w, fragment, h)?;
    if range.start > range.end || range.end > w.cols() {
        return Err(Error::InvalidConfig("column range outside the matrix"));
    }
    let g_inv = h.g_inv();
    let m = w.cols();
    let snapshot = &*w;
    let rows = map_rows(w.rows(), |r| {
        let cols: Vec<usize> = fragment.row(r).iter().copied().filter(|c| range.contains(c)).collect();
        if cols.is_empty() {
            return None;
        }
        let mut row = snapshot.row(r).to_vec();
        let mut loss = 0.0;
        for &j in &cols {
            let gjj = g_inv[(j, j)];
            let c = row[j] / gjj;
            loss += 0.5 * c * row[j];
            let g_row = &g_inv.row(j)[j..m];
            for (v, &g) in row[j..].iter_mut().zip(g_row) {
                *v -= c * g;
            }
            row[j] = 0.0;
        }
        Some((r, row, loss))
    });
    let mut total = 0.0;
    for (r, row, loss) in rows.into_iter().flatten() {
        w.row_mut(r).copy_from_slice(&row);
        total += loss;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hessian::dampen;

    fn correlated_g() -> DenseMatrix {
        DenseMatrix::from_rows(&[
            [4.0, 1.5, 0.8, 0.2],
            [1.5, 3.0, 1.0, 0.5],
            [0.8, 1.0, 2.5, 0.9],
            [0.2, 0.5, 0.9, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn orthonormal_inputs_zero_only_the_pruned_weight() {
        let h = dampen(&DenseMatrix::identity(2), 0.0).unwrap();
        let c = compensate_mrp_row(0, &[3.0, 4.0], &[0], &h).unwrap();
        assert_eq!(c.delta, vec![-3.0, 0.0]);
        assert_eq!(c.predicted_loss, 4.5);
    }

    #[test]
    fn already_zero_weights_need_no_update() {
        let h = dampen(&correlated_g(), 0.01).unwrap();
        let c = compensate_mrp_row(0, &[0.0, 1.0, 0.0, 2.0], &[0, 2], &h).unwrap();
        assert!(c.delta.iter().all(|d| *d == 0.0));
        assert_eq!(c.predicted_loss, 0.0);
    }

    #[test]
    fn pruning_every_column_zeroes_the_row() {
        let h = dampen(&correlated_g(), 0.01).unwrap();
        let w = [0.3, -1.2, 0.7, 2.0];
        let c = compensate_mrp_row(0, &w, &[0, 1, 2, 3], &h).unwrap();
        for (d, v) in c.delta.iter().zip(&w) {
            assert_eq!(*d, -v);
        }
    }

    #[test]
    fn single_removal_matches_obs_update() {
        let h = dampen(&correlated_g(), 0.01).unwrap();
        let w = [0.3, -1.2, 0.7, 2.0];
        let c = compensate_mrp_row(0, &w, &[2], &h).unwrap();
        let gi = h.g_inv();
        for j in 0..4 {
            let expected = if j == 2 { -w[2] } else { -(w[2] / gi[(2, 2)]) * gi[(2, j)] };
            assert!((c.delta[j] - expected).abs() <= 1e-15 * expected.abs().max(1.0));
        }
        assert!((c.predicted_loss - 0.5 * w[2] * w[2] / gi[(2, 2)]).abs() < 1e-15);
    }

    #[test]
    fn predicted_loss_matches_damped_quadratic_form() {
        let h = dampen(&correlated_g(), 0.01).unwrap();
        let w = [0.3, -1.2, 0.7, 2.0];
        let c = compensate_mrp_row(0, &w, &[1, 3], &h).unwrap();
        let measured = crate::matrix::half_quad_form(h.g(), &c.delta, 0.0);
        assert!((measured - c.predicted_loss).abs() <= 1e-12 * measured);
    }

    #[test]
    fn full_matrix_rows_are_independent() {
        let h = dampen(&correlated_g(), 0.01).unwrap();
        let w = DenseMatrix::from_fn(5, 4, |r, c| (r as f64 - 2.0) * 0.5 + c as f64 * 0.25);
        assert_eq!(compensate_mrp(&w, &PruneMask::empty(5, 4), &h).unwrap(), DenseMatrix::zeros(5, 4));

        let mut rows = alloc::vec![alloc::vec![]; 5];
        rows[3] = alloc::vec![1, 2];
        let mask = PruneMask::from_rows(4, rows).unwrap();
        let delta = compensate_mrp(&w, &mask, &h).unwrap();
        for r in 0..5 {
            let nonzero = delta.row(r).iter().any(|d| *d != 0.0);
            assert_eq!(nonzero, r == 3);
        }
        let total = predicted_loss_total(&w, &mask, &h).unwrap();
        let row3 = compensate_mrp_row(3, w.row(3), &[1, 2], &h).unwrap();
        assert_eq!(total, row3.predicted_loss);

        let mut pruned = w.clone();
        apply_compensation(&mut pruned, &delta, &mask).unwrap();
        assert_eq!(mask.first_violation(&pruned), None);
    }

    #[test]
    fn sequential_with_identity_matches_mrp() {
        let h = dampen(&DenseMatrix::identity(4), 0.0).unwrap();
        let w = DenseMatrix::from_rows(&[[0.3, -1.2, 0.7, 2.0], [1.0, 0.1, -0.4, 0.6]]).unwrap();
        let mask = PruneMask::from_rows(4, alloc::vec![alloc::vec![0, 2], alloc::vec![1]]).unwrap();
        let mut seq = w.clone();
        compensate_sequential_s(&mut seq, &mask, &h, 0..4).unwrap();
        let mut mrp = w.clone();
        apply_compensation(&mut mrp, &compensate_mrp(&w, &mask, &h).unwrap(), &mask).unwrap();
        assert_eq!(seq, mrp);
    }

    #[test]
    fn sequential_single_weight_in_first_column_matches_mrp_row() {
        let h = dampen(&correlated_g(), 0.01).unwrap();
        let w = DenseMatrix::from_rows(&[[0.3, -1.2, 0.7, 2.0]]).unwrap();
        let mask = PruneMask::from_rows(4, alloc::vec![alloc::vec![0]]).unwrap();
        let mut seq = w.clone();
        compensate_sequential_s(&mut seq, &mask, &h, 0..4).unwrap();
        let mut mrp = w.clone();
        apply_compensation(&mut mrp, &compensate_mrp(&w, &mask, &h).unwrap(), &mask).unwrap();
        assert_eq!(seq, mrp);
    }

    #[test]
    fn sequential_single_weight_matches_mrp_row_right_of_it() {
        let h = dampen(&correlated_g(), 0.01).unwrap();
        let w = DenseMatrix::from_rows(&[[0.3, -1.2, 0.7, 2.0]]).unwrap();
        let mask = PruneMask::from_rows(4, alloc::vec![alloc::vec![1]]).unwrap();
        let mut seq = w.clone();
        compensate_sequential_s(&mut seq, &mask, &h, 0..4).unwrap();
        let c = compensate_mrp_row(0, w.row(0), &[1], &h).unwrap();
        // the OBS step leaves earlier columns untouched, so compare from column 1 on
        for j in 1..4 {
            let expected = w[(0, j)] + c.delta[j];
            assert!((seq[(0, j)] - expected).abs() <= 1e-15);
        }
    }

    #[test]
    fn sequential_never_touches_columns_left_of_a_pruned_weight() {
        let h = dampen(&correlated_g(), 0.01).unwrap();
        let w = DenseMatrix::from_rows(&[[0.3, -1.2, 0.7, 2.0]]).unwrap();
        let mask = PruneMask::from_rows(4, alloc::vec![alloc::vec![2]]).unwrap();
        let mut seq = w.clone();
        compensate_sequential_s(&mut seq, &mask, &h, 0..4).unwrap();
        assert_eq!(&seq.row(0)[..2], &w.row(0)[..2]);
        assert_eq!(seq[(0, 2)], 0.0);
        assert_ne!(seq[(0, 3)], w[(0, 3)]);
    }
}
