//! Seeded synthetic layers with correlated calibration activations.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use mrp_core::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::Overrides;
use crate::manifest::LayerEntry;
use crate::npy::{write_npy, Dtype, NpyError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    /// Output features `n`.
    pub rows: usize,
    /// Input features `m`.
    pub cols: usize,
    /// Calibration columns `B`.
    pub samples: usize,
    /// Correlation between neighbouring input features.
    pub rho: f64,
    pub seed: u64,
}

pub struct SynthLayer {
    pub weights: DenseMatrix,
    pub calibration: DenseMatrix,
}

/// `m×b` activations; each column is an AR(1) chain over the features with
/// coefficient `rho`, and every feature gets its own scale in `[0.5, 2)`.
pub fn correlated_activations(rng: &mut impl Rng, m: usize, b: usize, rho: f64) -> DenseMatrix {
    let innov = (1.0 - rho * rho).max(0.0).sqrt();
    let scales: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut x = DenseMatrix::zeros(m, b);
    for t in 0..b {
        let mut prev: f64 = rng.sample(StandardNormal);
        for (i, scale) in scales.iter().enumerate() {
            if i > 0 {
                let z: f64 = rng.sample(StandardNormal);
                prev = rho * prev + innov * z;
            }
            x[(i, t)] = scale * prev;
        }
    }
    x
}

pub fn synthetic_layer(spec: &SynthSpec) -> SynthLayer {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std = 1.0 / (spec.cols.max(1) as f64).sqrt();
    let weights = DenseMatrix::from_fn(spec.rows, spec.cols, |_, _| std * rng.sample::<f64, _>(StandardNormal));
    let calibration = correlated_activations(&mut rng, spec.cols, spec.samples, spec.rho);
    SynthLayer { weights, calibration }
}

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Npy(#[from] NpyError),
}

/// Writes `<name>.w.npy`, `<name>.x.npy` per layer plus `manifest.json`.
///
/// Layer `i` uses seed `spec.seed + i`.
pub fn write_dump(dir: &Path, spec: &SynthSpec, layers: usize) -> Result<PathBuf, DumpError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(layers);
    for i in 0..layers {
        let name = format!("layer{i}");
        let layer = synthetic_layer(&SynthSpec { seed: spec.seed.wrapping_add(i as u64), ..*spec });
        let (w, x) = (format!("{name}.w.npy"), format!("{name}.x.npy"));
        write_npy(&layer.weights, Dtype::F64, dir.join(&w))?;
        write_npy(&layer.calibration, Dtype::F64, dir.join(&x))?;
        entries.push(LayerEntry {
            name,
            weights: w.into(),
            calibration: Some(x.into()),
            hessian: None,
            overrides: Overrides::default(),
        });
    }
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&entries).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_correlated() {
        let spec = SynthSpec { rows: 4, cols: 16, samples: 4000, rho: 0.9, seed: 7 };
        let a = synthetic_layer(&spec);
        let b = synthetic_layer(&spec);
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.calibration, b.calibration);
        assert_ne!(synthetic_layer(&SynthSpec { seed: 8, ..spec }).weights, a.weights);

        // neighbouring features correlate at about rho
        let x = &a.calibration;
        let corr = |i: usize, j: usize| {
            let dot = |p: usize, q: usize| (0..x.cols()).map(|t| x[(p, t)] * x[(q, t)]).sum::<f64>();
            dot(i, j) / (dot(i, i) * dot(j, j)).sqrt()
        };
        for i in 0..15 {
            assert!((corr(i, i + 1) - 0.9).abs() < 0.05, "{i}: {}", corr(i, i + 1));
        }
    }
}
