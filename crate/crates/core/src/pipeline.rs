//! Per-layer block loop: select a block's pruned positions from the current
//! weights, extend the cumulative mask, compensate, repeat.
//!
//! With optimal compensation each block solves the closed form against the
//! row's *cumulative* pruned set. Earlier pruned weights are already zero, so
//! their constraints keep them at zero while every unpruned weight in the row
//! (left or right of the block) is updated.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::compensate::{compensate_sequential_s, mrp_update_rows};
use crate::hessian::HessianState;
use crate::mask::{
    mask_nm_solution_m_in, mask_nm_solution_s_in, mask_unstructured, score_solution_s, NmPattern,
    PruneMask,
};
use crate::matrix::{half_quad_form, DenseMatrix};
use crate::par::map_rows;
use crate::timer::Stopwatch;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Diagonal approximation: pruned weights are treated independently.
    S,
    /// Full interaction between pruned weights.
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyCombo {
    pub mask: Strategy,
    pub comp: Strategy,
}

impl StrategyCombo {
    pub const SS: Self = Self { mask: Strategy::S, comp: Strategy::S };
    pub const SM: Self = Self { mask: Strategy::S, comp: Strategy::M };
    pub const MS: Self = Self { mask: Strategy::M, comp: Strategy::S };
    pub const MM: Self = Self { mask: Strategy::M, comp: Strategy::M };
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::S => "S",
            Strategy::M => "M",
        })
    }
}

impl fmt::Display for StrategyCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.mask, self.comp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pattern {
    Unstructured { alpha: f64 },
    SemiStructured(NmPattern),
}

impl Pattern {
    pub fn target_sparsity(&self) -> f64 {
        match self {
            Pattern::Unstructured { alpha } => *alpha,
            Pattern::SemiStructured(p) => p.n as f64 / p.m as f64,
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Unstructured { alpha } => write!(f, "unstructured:{alpha}"),
            Pattern::SemiStructured(p) => write!(f, "{p}"),
        }
    }
}

/// Number of columns per block of the mask/compensate loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSize {
    All,
    Cols(usize),
}

impl BlockSize {
    pub fn ranges(&self, cols: usize) -> Vec<Range<usize>> {
        let width = match *self {
            BlockSize::All => cols.max(1),
            BlockSize::Cols(s) => s.max(1),
        };
        (0..cols).step_by(width).map(|lo| lo..(lo + width).min(cols)).collect()
    }
}

impl fmt::Display for BlockSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockSize::All => f.write_str("all"),
            BlockSize::Cols(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityConfig {
    pub pattern: Pattern,
    pub block_size: BlockSize,
    pub combo: StrategyCombo,
    pub gamma_rel: f64,
}

impl SparsityConfig {
    pub fn unstructured(alpha: f64, block_size: BlockSize, combo: StrategyCombo) -> Self {
        Self { pattern: Pattern::Unstructured { alpha }, block_size, combo, gamma_rel: 0.01 }
    }

    pub fn semi_structured(pattern: NmPattern, block_size: BlockSize, combo: StrategyCombo) -> Self {
        Self { pattern: Pattern::SemiStructured(pattern), block_size, combo, gamma_rel: 0.01 }
    }

    pub fn with_gamma(mut self, gamma_rel: f64) -> Self {
        self.gamma_rel = gamma_rel;
        self
    }

    /// Checks the configuration on its own, independent of any layer shape.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_rel >= 0.0 && self.gamma_rel.is_finite()) {
            return Err(Error::InvalidConfig("dampening ratio must be finite and non-negative"));
        }
        if self.block_size == BlockSize::Cols(0) {
            return Err(Error::InvalidConfig("block size must be positive"));
        }
        match self.pattern {
            Pattern::Unstructured { alpha } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::InvalidConfig("pruning rate must lie in [0, 1]"));
                }
                if self.combo.mask == Strategy::M {
                    return Err(Error::InvalidConfig(
                        "Solution M mask selection is only available for N:M patterns",
                    ));
                }
            }
            Pattern::SemiStructured(p) => {
                NmPattern::new(p.n, p.m)?;
                if let BlockSize::Cols(s) = self.block_size {
                    if !s.is_multiple_of(p.m) {
                        return Err(Error::InvalidConfig("block size must be a multiple of M"));
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_for(&self, cols: usize) -> Result<()> {
        self.validate()?;
        if let Pattern::SemiStructured(p) = self.pattern {
            if !cols.is_multiple_of(p.m) {
                return Err(Error::ColsNotDivisible { cols, group: p.m });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    /// Building and inverting the layer statistic; filled by the caller.
    pub hessian_ms: f64,
    pub mask_ms: f64,
    pub compensate_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub layer_name: String,
    pub config: SparsityConfig,
    pub rows: usize,
    pub cols: usize,
    /// Sum of the per-block predicted losses.
    pub predicted_loss: f64,
    /// `½·δw·G·δwᵀ` with the damped statistic.
    pub measured_error_damped: f64,
    /// `‖δw·x‖²_F`, i.e. the same form with the raw statistic.
    pub measured_error_raw: f64,
    pub pruned_count: usize,
    pub achieved_sparsity: f64,
    /// Optimal compensation: the closed-form loss of the block's update.
    /// Sequential compensation: summed single-removal losses at removal time.
    pub per_block_predicted_loss: Vec<f64>,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone)]
pub struct PrunedLayer {
    pub weights: DenseMatrix,
    pub mask: PruneMask,
    pub report: LayerReport,
}

/// `(½·δ·G·δᵀ, ½·δ·(G − γ_abs·I)·δᵀ)` summed over rows, with `δ = pruned − original`.
pub fn measured_error(original: &DenseMatrix, pruned: &DenseMatrix, h: &HessianState) -> Result<(f64, f64)> {
    if original.shape() != pruned.shape() {
        return Err(Error::DimMismatch { expected: original.rows(), found: pruned.rows() });
    }
    if original.cols() != h.dim() {
        return Err(Error::DimMismatch { expected: h.dim(), found: original.cols() });
    }
    let per_row = map_rows(original.rows(), |r| {
        let delta: Vec<f64> = pruned.row(r).iter().zip(original.row(r)).map(|(a, b)| a - b).collect();
        let damped = half_quad_form(h.g(), &delta, 0.0);
        let raw = half_quad_form(h.g(), &delta, h.gamma_abs());
        (damped, raw)
    });
    Ok(per_row.into_iter().fold((0.0, 0.0), |(d, r), (a, b)| (d + a, r + b)))
}

fn select_block(w: &DenseMatrix, h: &HessianState, cfg: &SparsityConfig, range: Range<usize>) -> Result<PruneMask> {
    match (cfg.pattern, cfg.combo.mask) {
        (Pattern::Unstructured { alpha }, Strategy::S) => {
            mask_unstructured(&score_solution_s(w, h)?, alpha, range)
        }
        (Pattern::SemiStructured(p), Strategy::S) => {
            mask_nm_solution_s_in(&score_solution_s(w, h)?, p, range)
        }
        (Pattern::SemiStructured(p), Strategy::M) => mask_nm_solution_m_in(w, h, p, range),
        (Pattern::Unstructured { .. }, Strategy::M) => Err(Error::InvalidConfig(
            "Solution M mask selection is only available for N:M patterns",
        )),
    }
}

fn run_block(
    w: &mut DenseMatrix,
    mask: &mut PruneMask,
    h: &HessianState,
    cfg: &SparsityConfig,
    range: Range<usize>,
    timings: &mut PhaseTimings,
) -> Result<f64> {
    let clock = Stopwatch::start();
    let fragment = select_block(w, h, cfg, range.clone())?;
    timings.mask_ms += clock.elapsed_ms();

    let before = mask.clone();
    mask.merge(&fragment)?;

    let clock = Stopwatch::start();
    let loss = match cfg.combo.comp {
        Strategy::M => {
            // rows without new positions have w_P = 0 and need no update
            let active: Vec<bool> = (0..w.rows()).map(|r| !fragment.row(r).is_empty()).collect();
            mrp_update_rows(w, mask, h, &active)?
        }
        Strategy::S => compensate_sequential_s(w, &fragment, h, range)?,
    };
    timings.compensate_ms += clock.elapsed_ms();

    if let Some((row, col)) = before.first_violation(w) {
        return Err(Error::ConstraintViolated { row, col });
    }
    mask.snap(w);
    Ok(loss)
}

/// Prunes one layer under `cfg` with the already damped statistic `h`.
pub fn prune_layer(w: &DenseMatrix, h: &HessianState, cfg: &SparsityConfig) -> Result<PrunedLayer> {
    if w.cols() != h.dim() {
        return Err(Error::DimMismatch { expected: h.dim(), found: w.cols() });
    }
    cfg.validate_for(w.cols())?;
    let total = Stopwatch::start();

    let mut weights = w.clone();
    let mut mask = PruneMask::empty(w.rows(), w.cols());
    let mut timings = PhaseTimings::default();
    let ranges = cfg.block_size.ranges(w.cols());
    let mut per_block = vec![0.0; ranges.len()];

    for (b, range) in ranges.into_iter().enumerate() {
        per_block[b] = run_block(&mut weights, &mut mask, h, cfg, range, &mut timings)
            .map_err(|e| Error::Block { block: b, source: alloc::boxed::Box::new(e) })?;
    }

    let (measured_error_damped, measured_error_raw) = measured_error(w, &weights, h)?;
    timings.total_ms = total.elapsed_ms();
    let report = LayerReport {
        layer_name: String::new(),
        config: *cfg,
        rows: w.rows(),
        cols: w.cols(),
        predicted_loss: per_block.iter().sum(),
        measured_error_damped,
        measured_error_raw,
        pruned_count: mask.count(),
        achieved_sparsity: mask.sparsity(),
        per_block_predicted_loss: per_block,
        timings,
    };
    Ok(PrunedLayer { weights, mask, report })
}
