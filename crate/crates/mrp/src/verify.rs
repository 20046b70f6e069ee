//! Re-certifies a pruned tensor: structural zero check plus closed form
//! against the primal oracle on sampled rows.

use mrp_core::{compensate_mrp_row, row_least_squares, DenseMatrix, HessianState, PruneMask};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Relative tolerance for both the update and the objective.
pub const TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub rows_checked: Vec<usize>,
    /// First masked entry of the pruned tensor that is not exactly zero.
    pub violation: Option<(usize, usize)>,
    /// Max-abs update deviation relative to the oracle update's max-abs.
    pub max_delta_deviation: f64,
    pub max_objective_rel_error: f64,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
            && self.max_delta_deviation <= TOLERANCE
            && self.max_objective_rel_error <= TOLERANCE
    }
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Samples `rows` distinct rows with `seed` and checks them.
///
/// Without an explicit mask the pruned set of each row is read off the
/// exact zeros of `pruned`.
pub fn verify(
    original: &DenseMatrix,
    pruned: &DenseMatrix,
    mask: Option<&PruneMask>,
    h: &HessianState,
    rows: usize,
    seed: u64,
) -> mrp_core::Result<VerifyOutcome> {
    if original.shape() != pruned.shape() {
        return Err(mrp_core::Error::DimMismatch { expected: original.rows(), found: pruned.rows() });
    }
    if original.cols() != h.dim() {
        return Err(mrp_core::Error::DimMismatch { expected: h.dim(), found: original.cols() });
    }
    let inferred;
    let mask = match mask {
        Some(m) => {
            if (m.rows(), m.cols()) != pruned.shape() {
                return Err(mrp_core::Error::DimMismatch { expected: pruned.rows(), found: m.rows() });
            }
            m
        }
        None => {
            inferred = PruneMask::from_zeros(pruned);
            &inferred
        }
    };
    let violation = mask.first_violation(pruned);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rows.min(original.rows());
    let mut rows_checked = rand::seq::index::sample(&mut rng, original.rows(), k).into_vec();
    rows_checked.sort_unstable();

    let mut max_delta_deviation: f64 = 0.0;
    let mut max_objective_rel_error: f64 = 0.0;
    for &r in &rows_checked {
        let w_row = original.row(r);
        let closed = compensate_mrp_row(r, w_row, mask.row(r), h)?;
        let oracle = row_least_squares(w_row, mask.row(r), h.g())?;
        let scale = oracle.delta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let dev = closed.delta.iter().zip(&oracle.delta).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let dev = if scale > 0.0 { dev / scale } else { dev };
        max_delta_deviation = max_delta_deviation.max(dev);
        max_objective_rel_error = max_objective_rel_error.max(rel(closed.predicted_loss, oracle.error));
    }
    Ok(VerifyOutcome { rows_checked, violation, max_delta_deviation, max_objective_rel_error })
}
