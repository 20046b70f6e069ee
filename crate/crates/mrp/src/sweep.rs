//! Ablation grid over the dampening ratio and the calibration sample count.

use std::fmt::Write as _;

use mrp_core::{accumulate, dampen, prune_layer, DenseMatrix, SparsityConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifest::{Manifest, StatisticSource};
use crate::model::{load_npy, load_statistic, RunError};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub gamma_rel: f64,
    /// `None` means every calibration column.
    pub n_calib: Option<usize>,
    pub predicted_loss: f64,
    pub measured_error_damped: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    /// Empty means each layer's configured ratio.
    pub gammas: Vec<Option<f64>>,
    pub calib_counts: Vec<Option<usize>>,
    pub seed: u64,
}

/// The first `count` columns of a seeded permutation, in ascending order.
///
/// Smaller counts therefore select subsets of larger ones.
pub fn calibration_subset(x: &DenseMatrix, count: usize, seed: u64, layer: usize) -> DenseMatrix {
    if count >= x.cols() {
        return x.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (layer as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut order: Vec<usize> = (0..x.cols()).collect();
    order.shuffle(&mut rng);
    let mut picked = order[..count].to_vec();
    picked.sort_unstable();
    let rows: Vec<usize> = (0..x.rows()).collect();
    x.select(&rows, &picked)
}

/// Runs the cross product of the grid, summing over layers per point.
///
/// Layers are the outer loop so each is loaded once.
pub fn sweep(manifest: &Manifest, base: &SparsityConfig, grid: &SweepGrid) -> Result<Vec<SweepPoint>, RunError> {
    let gammas = if grid.gammas.is_empty() { vec![None] } else { grid.gammas.clone() };
    let counts = if grid.calib_counts.is_empty() { vec![None] } else { grid.calib_counts.clone() };
    let mut points: Vec<SweepPoint> = counts
        .iter()
        .flat_map(|&n| {
            gammas.iter().map(move |&g| SweepPoint {
                gamma_rel: g.unwrap_or(base.gamma_rel),
                n_calib: n,
                predicted_loss: 0.0,
                measured_error_damped: 0.0,
            })
        })
        .collect();

    for (li, entry) in manifest.layers.iter().enumerate() {
        let layer_cfg = entry.overrides.apply(base)?;
        let w = load_npy(&entry.weights)?;
        let src = entry.statistic().ok_or_else(|| RunError::Layer {
            layer: entry.name.clone(),
            message: "needs exactly one of calibration or hessian".into(),
        })?;
        let x = match &src {
            StatisticSource::Calibration(path) if counts.iter().any(Option::is_some) => Some(load_npy(path)?),
            StatisticSource::Hessian(_) if counts.iter().any(Option::is_some) => {
                return Err(RunError::Layer {
                    layer: entry.name.clone(),
                    message: "calibration counts need activations, not a precomputed hessian".into(),
                })
            }
            _ => None,
        };

        let mut idx = 0;
        for &count in &counts {
            let g_raw = match (count, &x) {
                (Some(n), Some(x)) => {
                    if x.rows() != w.cols() {
                        return Err(RunError::Layer {
                            layer: entry.name.clone(),
                            message: format!("calibration has {} rows but the weights have {} columns", x.rows(), w.cols()),
                        });
                    }
                    let sub = calibration_subset(x, n, grid.seed, li);
                    accumulate([&sub]).map_err(|source| RunError::Solver { layer: entry.name.clone(), source })?
                }
                _ => load_statistic(&entry.name, &src, w.cols())?,
            };
            for &gamma in &gammas {
                let cfg = SparsityConfig { gamma_rel: gamma.unwrap_or(layer_cfg.gamma_rel), ..layer_cfg };
                let solver = |source| RunError::Solver { layer: entry.name.clone(), source };
                cfg.validate().map_err(solver)?;
                let h = dampen(&g_raw, cfg.gamma_rel).map_err(solver)?;
                let out = prune_layer(&w, &h, &cfg).map_err(solver)?;
                points[idx].predicted_loss += out.report.predicted_loss;
                points[idx].measured_error_damped += out.report.measured_error_damped;
                idx += 1;
            }
        }
    }
    Ok(points)
}

pub const CSV_HEADER: &str = "gamma_rel,n_calib,predicted_loss,measured_error_damped";

pub fn to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        let n = p.n_calib.map_or_else(|| "all".to_string(), |n| n.to_string());
        writeln!(out, "{},{},{},{}", p.gamma_rel, n, p.predicted_loss, p.measured_error_damped).unwrap();
    }
    out
}
