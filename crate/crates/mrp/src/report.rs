//! JSON run reports and the mask sidecar format.

use std::path::Path;

use mrp_core::{LayerReport, PhaseTimings, PruneMask, SparsityConfig};
use serde::{Deserialize, Serialize};

use crate::config::{pattern_label, BlockSizeSpec};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingsMs {
    pub hessian: f64,
    pub mask: f64,
    pub compensate: f64,
    pub total: f64,
}

impl From<PhaseTimings> for TimingsMs {
    fn from(t: PhaseTimings) -> Self {
        TimingsMs { hessian: t.hessian_ms, mask: t.mask_ms, compensate: t.compensate_ms, total: t.total_ms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerStatus {
    Ok,
    Failed,
}

/// Configuration echo as written in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub pattern: String,
    pub target_sparsity: f64,
    pub combo: String,
    pub block_size: BlockSizeSpec,
    pub gamma_rel: f64,
}

impl From<&SparsityConfig> for ConfigEcho {
    fn from(cfg: &SparsityConfig) -> Self {
        ConfigEcho {
            pattern: pattern_label(&cfg.pattern),
            target_sparsity: cfg.pattern.target_sparsity(),
            combo: cfg.combo.to_string(),
            block_size: cfg.block_size.into(),
            gamma_rel: cfg.gamma_rel,
        }
    }
}

/// One layer of a run report. Numeric fields are null for failed layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub layer_name: String,
    pub status: LayerStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(flatten)]
    pub config: ConfigEcho,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub gamma_abs: Option<f64>,
    pub predicted_loss: Option<f64>,
    pub measured_error_damped: Option<f64>,
    pub measured_error_raw: Option<f64>,
    pub pruned_count: Option<usize>,
    pub achieved_sparsity: Option<f64>,
    pub per_block_predicted_loss: Option<Vec<f64>>,
    pub timings_ms: Option<TimingsMs>,
    pub output: Option<String>,
}

impl LayerRecord {
    pub fn ok(report: &LayerReport, gamma_abs: f64, timings: bool, output: Option<&Path>) -> Self {
        LayerRecord {
            layer_name: report.layer_name.clone(),
            status: LayerStatus::Ok,
            error: None,
            config: (&report.config).into(),
            rows: Some(report.rows),
            cols: Some(report.cols),
            gamma_abs: Some(gamma_abs),
            predicted_loss: Some(report.predicted_loss),
            measured_error_damped: Some(report.measured_error_damped),
            measured_error_raw: Some(report.measured_error_raw),
            pruned_count: Some(report.pruned_count),
            achieved_sparsity: Some(report.achieved_sparsity),
            per_block_predicted_loss: Some(report.per_block_predicted_loss.clone()),
            timings_ms: timings.then(|| report.timings.into()),
            output: output.map(|p| p.display().to_string()),
        }
    }

    pub fn failed(name: &str, cfg: &SparsityConfig, error: String) -> Self {
        LayerRecord {
            layer_name: name.to_string(),
            status: LayerStatus::Failed,
            error: Some(error),
            config: cfg.into(),
            rows: None,
            cols: None,
            gamma_abs: None,
            predicted_loss: None,
            measured_error_damped: None,
            measured_error_raw: None,
            pruned_count: None,
            achieved_sparsity: None,
            per_block_predicted_loss: None,
            timings_ms: None,
            output: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub layers_ok: usize,
    pub layers_failed: usize,
    pub predicted_loss: f64,
    pub measured_error_damped: f64,
    pub measured_error_raw: f64,
    pub pruned_count: usize,
    pub weight_count: usize,
    pub achieved_sparsity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub layers: Vec<LayerRecord>,
    pub totals: Totals,
}

impl RunReport {
    pub fn new(layers: Vec<LayerRecord>) -> Self {
        let mut t = Totals::default();
        for l in &layers {
            match l.status {
                LayerStatus::Failed => t.layers_failed += 1,
                LayerStatus::Ok => {
                    t.layers_ok += 1;
                    t.predicted_loss += l.predicted_loss.unwrap_or(0.0);
                    t.measured_error_damped += l.measured_error_damped.unwrap_or(0.0);
                    t.measured_error_raw += l.measured_error_raw.unwrap_or(0.0);
                    t.pruned_count += l.pruned_count.unwrap_or(0);
                    t.weight_count += l.rows.unwrap_or(0) * l.cols.unwrap_or(0);
                }
            }
        }
        if t.weight_count > 0 {
            t.achieved_sparsity = t.pruned_count as f64 / t.weight_count as f64;
        }
        RunReport { version: REPORT_VERSION, layers, totals: t }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Mask sidecar: per-row sorted lists of pruned column indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskFile {
    pub rows: usize,
    pub cols: usize,
    pub pruned: Vec<Vec<usize>>,
}

impl From<&PruneMask> for MaskFile {
    fn from(m: &PruneMask) -> Self {
        MaskFile { rows: m.rows(), cols: m.cols(), pruned: m.row_lists().to_vec() }
    }
}

impl MaskFile {
    pub fn into_mask(self) -> Result<PruneMask, String> {
        if self.pruned.len() != self.rows {
            return Err(format!("mask lists {} rows but declares {}", self.pruned.len(), self.rows));
        }
        PruneMask::from_rows(self.cols, self.pruned).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("mask serializes");
        s.push('\n');
        s
    }
}
