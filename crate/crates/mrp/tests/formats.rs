use std::fs;
use std::path::PathBuf;

use mrp::manifest::{Manifest, StatisticSource};
use mrp::mrp_core::DenseMatrix;
use mrp::npy::{read_npy, read_npy_from, write_npy, write_npy_to, Dtype, NpyError};
use mrp::synth::{write_dump, SynthSpec};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn numpy_f64_files_round_trip_byte_for_byte() {
    for name in ["f64_3x5.npy", "f64_wide_1x300.npy", "f64_tall_1234x1.npy"] {
        let bytes = fs::read(fixture(name)).unwrap();
        let m = read_npy(fixture(name)).unwrap();
        let mut out = Vec::new();
        write_npy_to(&m, Dtype::F64, &mut out).unwrap();
        assert_eq!(out, bytes, "{name}");
    }
    let tall = read_npy(fixture("f64_tall_1234x1.npy")).unwrap();
    assert_eq!(tall.shape(), (1234, 1));
    assert_eq!(tall[(1233, 0)], 1233.0);
}

#[test]
fn numpy_f32_files_widen_and_rewrite() {
    let bytes = fs::read(fixture("f32_2x3.npy")).unwrap();
    let m = read_npy(fixture("f32_2x3.npy")).unwrap();
    assert_eq!(m.shape(), (2, 3));
    let mut out = Vec::new();
    write_npy_to(&m, Dtype::F32, &mut out).unwrap();
    assert_eq!(out, bytes);
}

#[test]
fn numpy_files_outside_the_contract_are_rejected() {
    let err = |name: &str| read_npy(fixture(name)).unwrap_err();
    assert!(matches!(err("fortran_2x2.npy"), NpyError::FortranOrder));
    assert!(matches!(err("rank1.npy"), NpyError::UnsupportedRank(d) if d == vec![4]));
    assert!(matches!(err("rank3.npy"), NpyError::UnsupportedRank(_)));
    assert!(matches!(err("big_endian.npy"), NpyError::UnsupportedDtype(d) if d == ">f8"));
    assert!(matches!(err("int32.npy"), NpyError::UnsupportedDtype(_)));
    assert!(matches!(err("v2_2x2.npy"), NpyError::UnsupportedVersion(2, 0)));
    assert!(matches!(err("make_fixtures.py"), NpyError::BadMagic));
}

#[test]
fn trailing_bytes_are_a_shape_mismatch() {
    let mut bytes = fs::read(fixture("f64_3x5.npy")).unwrap();
    bytes.extend_from_slice(&[0; 8]);
    assert!(matches!(read_npy_from(&mut &bytes[..]), Err(NpyError::ShapeMismatch { .. })));
}

#[test]
fn synthetic_dump_produces_a_valid_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { rows: 8, cols: 16, samples: 40, rho: 0.5, seed: 3 };
    let path = write_dump(dir.path(), &spec, 3).unwrap();
    let manifest = Manifest::load(&path).unwrap();
    assert_eq!(manifest.layers.len(), 3);
    for layer in &manifest.layers {
        let w = read_npy(&layer.weights).unwrap();
        assert_eq!(w.shape(), (8, 16));
        let Some(StatisticSource::Calibration(x)) = layer.statistic() else { panic!() };
        assert_eq!(read_npy(x).unwrap().shape(), (16, 40));
    }
    // seeded: a second dump is identical on disk
    let again = tempfile::tempdir().unwrap();
    write_dump(again.path(), &spec, 3).unwrap();
    for f in ["manifest.json", "layer0.w.npy", "layer2.x.npy"] {
        assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(again.path().join(f)).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn write_read_is_exact_for_f64(
        (rows, cols, data) in (0usize..20, 0usize..20).prop_flat_map(|(r, c)| {
            (Just(r), Just(c), prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, r * c))
        })
    ) {
        let m = DenseMatrix::new(rows, cols, data).unwrap();
        let mut bytes = Vec::new();
        write_npy_to(&m, Dtype::F64, &mut bytes).unwrap();
        let preamble = bytes.len() - rows * cols * 8;
        prop_assert_eq!(preamble % 64, 0);
        prop_assert_eq!(bytes[preamble - 1], b'\n');
        let back = read_npy_from(&mut &bytes[..]).unwrap();
        prop_assert_eq!(back.shape(), (rows, cols));
        for (a, b) in back.as_slice().iter().zip(m.as_slice()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

#[test]
fn file_helpers_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.npy");
    let m = DenseMatrix::from_fn(3, 4, |r, c| r as f64 - 0.5 * c as f64);
    write_npy(&m, Dtype::F64, &path).unwrap();
    assert_eq!(read_npy(&path).unwrap(), m);
    assert!(matches!(read_npy(dir.path().join("missing.npy")), Err(NpyError::Io(_))));
}
