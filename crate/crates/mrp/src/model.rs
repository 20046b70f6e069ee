//! Layer-by-layer driver over tensor files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mrp_core::{accumulate, dampen, prune_layer, DenseMatrix, HessianState, PrunedLayer, SparsityConfig};

use crate::config::ConfigError;
use crate::manifest::{LayerEntry, Manifest, ManifestError, StatisticSource};
use crate::npy::{read_npy, write_npy, Dtype, NpyError};
use crate::report::{LayerRecord, MaskFile, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{}: {source}", path.display())]
    Npy { path: PathBuf, source: NpyError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("layer {layer:?}: {source}")]
    Solver { layer: String, source: mrp_core::Error },
    #[error("layer {layer:?}: {message}")]
    Layer { layer: String, message: String },
}

impl RunError {
    fn solver(layer: &str) -> impl FnOnce(mrp_core::Error) -> RunError + '_ {
        move |source| RunError::Solver { layer: layer.to_string(), source }
    }
}

pub fn load_npy(path: &Path) -> Result<DenseMatrix, RunError> {
    read_npy(path).map_err(|source| RunError::Npy { path: path.to_path_buf(), source })
}

pub fn save_npy(m: &DenseMatrix, dtype: Dtype, path: &Path) -> Result<(), RunError> {
    write_npy(m, dtype, path).map_err(|source| RunError::Npy { path: path.to_path_buf(), source })
}

pub fn save_text(text: &str, path: &Path) -> Result<(), RunError> {
    fs::write(path, text).map_err(|source| RunError::Io { path: path.to_path_buf(), source })
}

/// Undamped `2·x·xᵀ` for a layer with `cols` input features.
pub fn load_statistic(layer: &str, src: &StatisticSource, cols: usize) -> Result<DenseMatrix, RunError> {
    match src {
        StatisticSource::Calibration(path) => {
            let x = load_npy(path)?;
            if x.rows() != cols {
                return Err(RunError::Layer {
                    layer: layer.to_string(),
                    message: format!("calibration has {} rows but the weights have {cols} columns", x.rows()),
                });
            }
            accumulate([&x]).map_err(RunError::solver(layer))
        }
        StatisticSource::Hessian(path) => {
            let g = load_npy(path)?;
            if g.shape() != (cols, cols) {
                return Err(RunError::Layer {
                    layer: layer.to_string(),
                    message: format!("hessian is {}x{} but the weights have {cols} columns", g.rows(), g.cols()),
                });
            }
            Ok(g)
        }
    }
}

/// Output of one pruned layer with the statistic it was pruned against.
pub struct LayerRun {
    pub pruned: PrunedLayer,
    pub hessian: HessianState,
}

/// Loads, dampens and prunes one layer.
pub fn run_layer(
    name: &str,
    weights: &Path,
    src: &StatisticSource,
    cfg: &SparsityConfig,
) -> Result<LayerRun, RunError> {
    let w = load_npy(weights)?;
    let clock = Instant::now();
    let g_raw = load_statistic(name, src, w.cols())?;
    let hessian = dampen(&g_raw, cfg.gamma_rel).map_err(RunError::solver(name))?;
    let hessian_ms = clock.elapsed().as_secs_f64() * 1e3;
    drop(g_raw);

    let mut pruned = prune_layer(&w, &hessian, cfg).map_err(RunError::solver(name))?;
    pruned.report.layer_name = name.to_string();
    pruned.report.timings.hessian_ms = hessian_ms;
    pruned.report.timings.total_ms += hessian_ms;
    Ok(LayerRun { pruned, hessian })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub dtype: Dtype,
    /// Record wall-clock timings in the report.
    pub timings: bool,
    pub fail_fast: bool,
    pub write_masks: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { dtype: Dtype::F64, timings: true, fail_fast: false, write_masks: false }
    }
}

/// File stem for a layer name: anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect()
}

fn write_outputs(
    run: &LayerRun,
    out: &Path,
    mask_out: Option<&Path>,
    opts: &RunOptions,
) -> Result<(), RunError> {
    save_npy(&run.pruned.weights, opts.dtype, out)?;
    if let Some(path) = mask_out {
        save_text(&MaskFile::from(&run.pruned.mask).to_json(), path)?;
    }
    Ok(())
}

/// Prunes one layer and writes its outputs, returning its report record.
pub fn prune_single(
    entry: &LayerEntry,
    cfg: &SparsityConfig,
    out: &Path,
    mask_out: Option<&Path>,
    opts: &RunOptions,
) -> Result<LayerRecord, RunError> {
    let src = entry.statistic().ok_or_else(|| RunError::Layer {
        layer: entry.name.clone(),
        message: "needs exactly one of calibration or hessian".into(),
    })?;
    let run = run_layer(&entry.name, &entry.weights, &src, cfg)?;
    write_outputs(&run, out, mask_out, opts)?;
    Ok(LayerRecord::ok(&run.pruned.report, run.hessian.gamma_abs(), opts.timings, Some(out)))
}

/// Prunes every manifest layer in order, one layer resident at a time.
///
/// Failed layers are recorded and skipped unless `fail_fast` is set.
pub fn prune_model(
    manifest: &Manifest,
    base: &SparsityConfig,
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<RunReport, RunError> {
    fs::create_dir_all(out_dir).map_err(|source| RunError::Io { path: out_dir.to_path_buf(), source })?;
    let mut records = Vec::with_capacity(manifest.layers.len());
    for entry in &manifest.layers {
        let result = entry.overrides.apply(base).map_err(RunError::from).and_then(|cfg| {
            let stem = file_stem(&entry.name);
            let out = out_dir.join(format!("{stem}.npy"));
            let mask = opts.write_masks.then(|| out_dir.join(format!("{stem}.mask.json")));
            prune_single(entry, &cfg, &out, mask.as_deref(), opts)
        });
        match result {
            Ok(record) => records.push(record),
            Err(e) if opts.fail_fast => return Err(e),
            Err(e) => {
                let cfg = entry.overrides.apply(base).unwrap_or(*base);
                records.push(LayerRecord::failed(&entry.name, &cfg, e.to_string()));
            }
        }
    }
    Ok(RunReport::new(records))
}
