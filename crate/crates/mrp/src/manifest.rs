//! Layer manifests: a JSON array describing the layers of a model dump.
//!
//! ```json
//! [
//!   {"name": "blk0.q_proj", "weights": "q.npy", "calibration": "x0.npy"},
//!   {"name": "blk0.mlp", "weights": "up.npy", "hessian": "g0.npy", "overrides": {"pattern": "2:4"}}
//! ]
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Overrides;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid manifest {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("manifest lists no layers")]
    Empty,
    #[error("layer name {0:?} appears more than once")]
    DuplicateName(String),
    #[error("layer {0} has an empty name")]
    EmptyName(usize),
    #[error("layer {0:?} needs exactly one of 'calibration' or 'hessian'")]
    Statistic(String),
    #[error("layer {name:?}: {message}")]
    Overrides { name: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub weights: PathBuf,
    /// Calibration activations, one row per input feature.
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    /// Precomputed `2·x·xᵀ`, used instead of calibration activations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub overrides: Overrides,
}

fn is_default(o: &Overrides) -> bool {
    *o == Overrides::default()
}

/// Where a layer's statistic comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatisticSource {
    Calibration(PathBuf),
    Hessian(PathBuf),
}

impl LayerEntry {
    pub fn statistic(&self) -> Option<StatisticSource> {
        match (&self.calibration, &self.hessian) {
            (Some(c), None) => Some(StatisticSource::Calibration(c.clone())),
            (None, Some(h)) => Some(StatisticSource::Hessian(h.clone())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub layers: Vec<LayerEntry>,
}

impl Manifest {
    /// Parses and validates `text`, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self, ManifestError> {
        let mut layers: Vec<LayerEntry> = serde_json::from_str(text)
            .map_err(|source| ManifestError::Json { path: origin.to_path_buf(), source })?;
        if layers.is_empty() {
            return Err(ManifestError::Empty);
        }
        let mut seen = HashSet::new();
        for (i, layer) in layers.iter_mut().enumerate() {
            if layer.name.is_empty() {
                return Err(ManifestError::EmptyName(i));
            }
            if !seen.insert(layer.name.clone()) {
                return Err(ManifestError::DuplicateName(layer.name.clone()));
            }
            if layer.statistic().is_none() {
                return Err(ManifestError::Statistic(layer.name.clone()));
            }
            // the overrides must at least be consistent on their own
            if layer.overrides.sparsity.is_some() && layer.overrides.pattern.is_some() {
                return Err(ManifestError::Overrides {
                    name: layer.name.clone(),
                    message: "overrides set both sparsity and pattern".into(),
                });
            }
            for p in [Some(&mut layer.weights), layer.calibration.as_mut(), layer.hessian.as_mut()]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(Manifest { layers })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, path)
    }
}
