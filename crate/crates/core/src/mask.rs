//! Choosing which weights to prune.
//!
//! Solution S treats every weight on its own and scores it with
//! `w_ij² / (2·Ginv_jj)`. Solution M enumerates every N-subset of an N:M
//! group and keeps the one with the smallest joint loss
//! `½·w_P·(Ginv[P,P])⁻¹·w_Pᵀ`. Ties are always broken towards lower
//! (row, column) indices.

use alloc::vec::Vec;
use core::ops::Range;

use crate::combinations::{binomial, Combinations};
use crate::compensate::subset_loss;
use crate::hessian::{inv_diagonal, HessianState};
use crate::matrix::DenseMatrix;
use crate::par::map_rows;
use crate::{Error, Result};

/// Upper bound on `C(M, N)` for Solution M group enumeration.
pub const MAX_GROUP_COMBINATIONS: u128 = 10_000;

/// N pruned weights in every group of M consecutive columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NmPattern {
    pub n: usize,
    pub m: usize,
}

impl NmPattern {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || n >= m {
            return Err(Error::InvalidConfig("N:M pattern requires 0 < N < M"));
        }
        Ok(Self { n, m })
    }

    fn check_range(&self, range: &Range<usize>, cols: usize) -> Result<()> {
        if range.end > cols || range.start > range.end {
            return Err(Error::InvalidConfig("column range outside the matrix"));
        }
        if !range.start.is_multiple_of(self.m) || !range.end.is_multiple_of(self.m) {
            let width = if range.start.is_multiple_of(self.m) { range.end } else { range.start };
            return Err(Error::ColsNotDivisible { cols: width, group: self.m });
        }
        Ok(())
    }
}

impl core::fmt::Display for NmPattern {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}:{}", self.n, self.m)
    }
}

/// Per-row sorted lists of pruned column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    rows: usize,
    cols: usize,
    pruned: Vec<Vec<usize>>,
}

impl PruneMask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, pruned: (0..rows).map(|_| Vec::new()).collect() }
    }

    pub fn from_rows(cols: usize, pruned: Vec<Vec<usize>>) -> Result<Self> {
        for row in &pruned {
            if !row.is_empty() {
                crate::hessian::validate_indices(row, cols)?;
            }
        }
        Ok(Self { rows: pruned.len(), cols, pruned })
    }

    /// Every exactly-zero entry of `w` becomes a pruned position.
    pub fn from_zeros(w: &DenseMatrix) -> Self {
        let pruned = (0..w.rows())
            .map(|r| w.row(r).iter().enumerate().filter(|(_, v)| **v == 0.0).map(|(c, _)| c).collect())
            .collect();
        Self { rows: w.rows(), cols: w.cols(), pruned }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[usize] {
        &self.pruned[r]
    }

    pub fn row_lists(&self) -> &[Vec<usize>] {
        &self.pruned
    }

    pub fn count(&self) -> usize {
        self.pruned.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn is_pruned(&self, r: usize, c: usize) -> bool {
        self.pruned[r].binary_search(&c).is_ok()
    }

    /// Pruned fraction of all `rows × cols` positions.
    pub fn sparsity(&self) -> f64 {
        let total = self.rows * self.cols;
        if total == 0 {
            0.0
        } else {
            self.count() as f64 / total as f64
        }
    }

    /// Sorted union with another mask of the same shape.
    pub fn merge(&mut self, other: &PruneMask) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimMismatch { expected: self.rows * self.cols, found: other.rows * other.cols });
        }
        for (mine, theirs) in self.pruned.iter_mut().zip(&other.pruned) {
            if theirs.is_empty() {
                continue;
            }
            mine.extend_from_slice(theirs);
            mine.sort_unstable();
            mine.dedup();
        }
        Ok(())
    }

    /// True when every position of `other` is also pruned here.
    pub fn contains(&self, other: &PruneMask) -> bool {
        self.rows == other.rows
            && other
                .pruned
                .iter()
                .enumerate()
                .all(|(r, cols)| cols.iter().all(|&c| self.is_pruned(r, c)))
    }

    /// Positions restricted to the column range.
    pub fn restrict(&self, range: Range<usize>) -> PruneMask {
        let pruned = self
            .pruned
            .iter()
            .map(|cols| cols.iter().copied().filter(|c| range.contains(c)).collect())
            .collect();
        Self { rows: self.rows, cols: self.cols, pruned }
    }

    /// First masked position of `w` that is not exactly zero.
    pub fn first_violation(&self, w: &DenseMatrix) -> Option<(usize, usize)> {
        self.pruned
            .iter()
            .enumerate()
            .find_map(|(r, cols)| cols.iter().find(|&&c| w[(r, c)] != 0.0).map(|&c| (r, c)))
    }

    /// Writes exact zeros into every masked position.
    pub fn snap(&self, w: &mut DenseMatrix) {
        for (r, cols) in self.pruned.iter().enumerate() {
            let row = w.row_mut(r);
            for &c in cols {
                row[c] = 0.0;
            }
        }
    }

    /// Checks that every M-group in `range` holds exactly N pruned positions.
    pub fn satisfies_nm(&self, pattern: NmPattern, range: Range<usize>) -> bool {
        self.pruned.iter().all(|cols| {
            range.clone().step_by(pattern.m).all(|start| {
                cols.iter().filter(|c| (start..start + pattern.m).contains(c)).count() == pattern.n
            })
        })
    }
}

/// Per-weight Solution S saliencies, all finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix(DenseMatrix);

impl ScoreMatrix {
    pub fn new(scores: DenseMatrix) -> Result<Self> {
        if scores.as_slice().iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidConfig("scores must be finite and non-negative"));
        }
        Ok(Self(scores))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.0
    }
}

/// `score[i][j] = w[i][j]² / (2·Ginv[j][j])`.
pub fn score_solution_s(w: &DenseMatrix, h: &HessianState) -> Result<ScoreMatrix> {
    if w.cols() != h.dim() {
        return Err(Error::DimMismatch { expected: h.dim(), found: w.cols() });
    }
    let denom: Vec<f64> = inv_diagonal(h).into_iter().map(|d| 2.0 * d).collect();
    let mut scores = DenseMatrix::zeros(w.rows(), w.cols());
    for r in 0..w.rows() {
        for ((s, &v), d) in scores.row_mut(r).iter_mut().zip(w.row(r)).zip(&denom) {
            *s = (v * v) / d;
        }
    }
    Ok(ScoreMatrix(scores))
}

/// `round_half_up(alpha · count)`.
pub fn prune_count(alpha: f64, count: usize) -> usize {
    let k = (alpha * count as f64 + 0.5) as usize;
    k.min(count)
}

/// Selects the `round(alpha · n · width)` smallest scores in `range`, jointly over all rows.
pub fn mask_unstructured(scores: &ScoreMatrix, alpha: f64, range: Range<usize>) -> Result<PruneMask> {
    let s = &scores.0;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig("pruning rate must lie in [0, 1]"));
    }
    if range.start > range.end || range.end > s.cols() {
        return Err(Error::InvalidConfig("column range outside the matrix"));
    }
    let width = range.end - range.start;
    let k = prune_count(alpha, s.rows() * width);
    let mut mask = PruneMask::empty(s.rows(), s.cols());
    if k == 0 {
        return Ok(mask);
    }

    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(s.rows() * width);
    for r in 0..s.rows() {
        let row = s.row(r);
        candidates.extend(range.clone().map(|c| (row[c], r, c)));
    }
    let order = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    };
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, order);
        candidates.truncate(k);
    }
    for &(_, r, c) in &candidates {
        mask.pruned[r].push(c);
    }
    mask.pruned.iter_mut().for_each(|cols| cols.sort_unstable());
    Ok(mask)
}

/// Solution S N:M mask over all columns.
pub fn mask_nm_solution_s(scores: &ScoreMatrix, pattern: NmPattern) -> Result<PruneMask> {
    let cols = scores.0.cols();
    if !cols.is_multiple_of(pattern.m) {
        return Err(Error::ColsNotDivisible { cols, group: pattern.m });
    }
    mask_nm_solution_s_in(scores, pattern, 0..cols)
}

/// Solution S N:M mask for the groups inside `range`.
pub fn mask_nm_solution_s_in(scores: &ScoreMatrix, pattern: NmPattern, range: Range<usize>) -> Result<PruneMask> {
    let s = &scores.0;
    pattern.check_range(&range, s.cols())?;
    let mut mask = PruneMask::empty(s.rows(), s.cols());
    let mut group: Vec<usize> = Vec::with_capacity(pattern.m);
    for (r, pruned) in mask.pruned.iter_mut().enumerate() {
        let row = s.row(r);
        for start in range.clone().step_by(pattern.m) {
            group.clear();
            group.extend(start..start + pattern.m);
            // stable sort keeps the lower column first on equal scores
            group.sort_by(|a, b| row[*a].total_cmp(&row[*b]));
            let mut chosen: Vec<usize> = group[..pattern.n].to_vec();
            chosen.sort_unstable();
            pruned.extend(chosen);
        }
    }
    Ok(mask)
}

/// Solution M N:M mask over all columns.
pub fn mask_nm_solution_m(w: &DenseMatrix, h: &HessianState, pattern: NmPattern) -> Result<PruneMask> {
    let cols = w.cols();
    if !cols.is_multiple_of(pattern.m) {
        return Err(Error::ColsNotDivisible { cols, group: pattern.m });
    }
    mask_nm_solution_m_in(w, h, pattern, 0..cols)
}

/// Best N-subset of one group starting at column `start`, with its loss.
///
/// Candidates are visited in lexicographic order and only a strictly smaller
/// loss replaces the incumbent.
pub fn best_group_subset(
    w_row: &[f64],
    h: &HessianState,
    pattern: NmPattern,
    start: usize,
) -> Result<(Vec<usize>, f64)> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for local in Combinations::new(pattern.m, pattern.n) {
        let cols: Vec<usize> = local.iter().map(|c| start + c).collect();
        let loss = subset_loss(w_row, &cols, h)?;
        match &best {
            Some((_, b)) if loss >= *b || loss.is_nan() => {}
            _ => best = Some((cols, loss)),
        }
    }
    best.ok_or(Error::InvalidConfig("empty candidate set"))
}

/// Solution M N:M mask for the groups inside `range`; rows run in parallel.
pub fn mask_nm_solution_m_in(
    w: &DenseMatrix,
    h: &HessianState,
    pattern: NmPattern,
    range: Range<usize>,
) -> Result<PruneMask> {
    if w.cols() != h.dim() {
        return Err(Error::DimMismatch { expected: h.dim(), found: w.cols() });
    }
    pattern.check_range(&range, w.cols())?;
    let count = binomial(pattern.m, pattern.n);
    if count > MAX_GROUP_COMBINATIONS {
        return Err(Error::TooManyCombinations { count, limit: MAX_GROUP_COMBINATIONS });
    }
    let rows = map_rows(w.rows(), |r| {
        let row = w.row(r);
        let mut chosen = Vec::with_capacity(range.len() / pattern.m * pattern.n);
        for start in range.clone().step_by(pattern.m) {
            chosen.extend(best_group_subset(row, h, pattern, start)?.0);
        }
        Ok(chosen)
    });
    let pruned = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PruneMask { rows: w.rows(), cols: w.cols(), pruned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hessian::dampen;
    use alloc::vec;

    fn scores(rows: &[&[f64]]) -> ScoreMatrix {
        ScoreMatrix::new(DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    fn diag_state(d: &[f64]) -> HessianState {
        // Ginv = diag(d) needs G = diag(1/d)
        let g = DenseMatrix::from_fn(d.len(), d.len(), |r, c| if r == c { 1.0 / d[r] } else { 0.0 });
        dampen(&g, 0.0).unwrap()
    }

    #[test]
    fn solution_s_scores() {
        let h = dampen(&DenseMatrix::identity(2), 0.0).unwrap();
        let w = DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(score_solution_s(&w, &h).unwrap().matrix().as_slice(), &[4.5, 8.0]);

        let h = diag_state(&[0.5, 2.0]);
        let w = DenseMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(score_solution_s(&w, &h).unwrap().matrix().as_slice(), &[1.0, 1.0]);

        let w = DenseMatrix::from_rows(&[[0.0, 2.0]]).unwrap();
        assert_eq!(score_solution_s(&w, &h).unwrap().matrix()[(0, 0)], 0.0);

        let w = DenseMatrix::zeros(1, 3);
        assert!(matches!(score_solution_s(&w, &h), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn unstructured_selection() {
        let s = scores(&[&[4.5, 8.0, 1.0, 2.0]]);
        assert!(mask_unstructured(&s, 0.0, 0..4).unwrap().is_empty());
        assert_eq!(mask_unstructured(&s, 1.0, 0..4).unwrap().row(0), &[0, 1, 2, 3]);
        assert_eq!(mask_unstructured(&s, 0.5, 0..4).unwrap().row(0), &[2, 3]);
        assert_eq!(mask_unstructured(&s, 0.5, 0..2).unwrap().row(0), &[0]);
        assert!(mask_unstructured(&s, 1.5, 0..4).is_err());
    }

    #[test]
    fn unstructured_is_joint_across_rows() {
        let s = scores(&[&[1.0, 2.0], &[0.5, 0.7]]);
        let m = mask_unstructured(&s, 0.5, 0..2).unwrap();
        assert_eq!(m.row(0), &[] as &[usize]);
        assert_eq!(m.row(1), &[0, 1]);
    }

    #[test]
    fn unstructured_ties_prefer_lower_row_then_col() {
        let s = scores(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let m = mask_unstructured(&s, 0.75, 0..2).unwrap();
        assert_eq!(m.row(0), &[0, 1]);
        assert_eq!(m.row(1), &[0]);
    }

    #[test]
    fn prune_count_rounds_half_up() {
        assert_eq!(prune_count(0.5, 5), 3);
        assert_eq!(prune_count(0.5, 4), 2);
        assert_eq!(prune_count(0.3, 10), 3);
        assert_eq!(prune_count(1.0, 7), 7);
    }

    #[test]
    fn nm_solution_s() {
        let p24 = NmPattern::new(2, 4).unwrap();
        let s = scores(&[&[4.5, 8.0, 1.0, 2.0]]);
        assert_eq!(mask_nm_solution_s(&s, p24).unwrap().row(0), &[2, 3]);

        let s = scores(&[&[1.0; 8]]);
        assert_eq!(mask_nm_solution_s(&s, p24).unwrap().row(0), &[0, 1, 4, 5]);

        let s = scores(&[&[5.0, 1.0, 7.0, 3.0]]);
        assert_eq!(mask_nm_solution_s(&s, NmPattern::new(1, 4).unwrap()).unwrap().row(0), &[1]);

        let s = scores(&[&[1.0; 6]]);
        assert_eq!(mask_nm_solution_s(&s, p24), Err(Error::ColsNotDivisible { cols: 6, group: 4 }));
    }

    #[test]
    fn nm_pattern_validation() {
        assert!(NmPattern::new(0, 4).is_err());
        assert!(NmPattern::new(4, 4).is_err());
        assert!(NmPattern::new(2, 4).is_ok());
    }

    #[test]
    fn nm_solution_m_with_diagonal_matches_s() {
        let h = diag_state(&[0.5, 2.0, 1.0, 0.25, 3.0, 1.5, 0.8, 1.1]);
        let w = DenseMatrix::from_rows(&[
            [1.0, -2.0, 0.3, 0.9, 2.2, -0.1, 0.4, 0.0],
            [0.7, 0.7, 0.7, 0.7, -1.0, 1.0, -1.0, 1.0],
        ])
        .unwrap();
        let p = NmPattern::new(2, 4).unwrap();
        let s_mask = mask_nm_solution_s(&score_solution_s(&w, &h).unwrap(), p).unwrap();
        let m_mask = mask_nm_solution_m(&w, &h, p).unwrap();
        assert_eq!(s_mask, m_mask);
        assert!(m_mask.satisfies_nm(p, 0..8));
    }

    #[test]
    fn nm_solution_m_guards_combinations() {
        let h = dampen(&DenseMatrix::identity(20), 0.0).unwrap();
        let w = DenseMatrix::zeros(1, 20);
        let p = NmPattern::new(10, 20).unwrap();
        assert!(matches!(mask_nm_solution_m(&w, &h, p), Err(Error::TooManyCombinations { .. })));
    }

    #[test]
    fn merge_and_contains() {
        let mut a = PruneMask::from_rows(6, vec![vec![0, 4], vec![]]).unwrap();
        let b = PruneMask::from_rows(6, vec![vec![1, 4, 5], vec![2]]).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a.row(0), &[0, 1, 4, 5]);
        assert_eq!(a.row(1), &[2]);
        assert!(a.contains(&b));
        assert!(!b.contains(&a));
        assert_eq!(a.count(), 5);
        assert_eq!(a.restrict(2..5).row(0), &[4]);
    }

    #[test]
    fn from_rows_validates() {
        assert!(PruneMask::from_rows(4, vec![vec![3, 1]]).is_err());
        assert!(PruneMask::from_rows(4, vec![vec![4]]).is_err());
    }

    #[test]
    fn snap_and_violations() {
        let mask = PruneMask::from_rows(3, vec![vec![1], vec![0, 2]]).unwrap();
        let mut w = DenseMatrix::from_fn(2, 3, |r, c| (r * 3 + c) as f64 + 1.0);
        assert_eq!(mask.first_violation(&w), Some((0, 1)));
        mask.snap(&mut w);
        assert_eq!(mask.first_violation(&w), None);
        assert_eq!(PruneMask::from_zeros(&w), mask);
    }
}
