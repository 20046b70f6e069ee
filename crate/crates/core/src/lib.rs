//! Layer-wise post-training pruning with closed-form multiple-removal compensation.
//!
//! A dense linear layer `w` (n×m) is pruned against calibration activations `x`
//! (m×B) through the damped layer statistic `G = 2·x·xᵀ + γ·I`. For a fixed set of
//! pruned positions per row, every remaining weight of that row is updated at once
//! so that the layer-output error `‖δw·x‖²` is minimal subject to the pruned
//! entries becoming exactly zero.
//!
//! The crate is `no_std` compatible (with `alloc`). The `std` feature adds
//! timing to layer reports and the `parallel` feature spreads row work over a
//! rayon pool; results are bitwise identical for any worker count.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod combinations;
pub mod compensate;
mod error;
pub mod hessian;
pub mod linalg;
pub mod mask;
pub mod matrix;
pub mod oracle;
mod par;
pub mod pipeline;
mod timer;

pub use compensate::{
    apply_compensation, compensate_mrp, compensate_mrp_row, compensate_sequential_s,
    predicted_loss_total, RowCompensation,
};
pub use error::{Error, Result};
pub use hessian::{accumulate, dampen, sub_inverse, HessianAccumulator, HessianState};
pub use mask::{
    mask_nm_solution_m, mask_nm_solution_s, mask_unstructured, score_solution_s, NmPattern,
    PruneMask, ScoreMatrix,
};
pub use matrix::DenseMatrix;
pub use oracle::{exhaustive_best_mask, row_least_squares, OracleMethod, OracleResult};
pub use pipeline::{
    measured_error, prune_layer, BlockSize, LayerReport, Pattern, PhaseTimings, PrunedLayer,
    SparsityConfig, Strategy, StrategyCombo,
};
