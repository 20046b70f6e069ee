//! 2-D tensors in the NPY v1.0 container.
//!
//! Only little-endian `f32`/`f64` in C order are accepted. Everything is
//! widened to `f64` on read.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use mrp_core::DenseMatrix;

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorHeader {
    pub dtype: Dtype,
    pub shape: (usize, usize),
    pub fortran_order: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum NpyError {
    #[error("not an NPY file (bad magic)")]
    BadMagic,
    #[error("unsupported NPY version {0}.{1}; only 1.0 is read")]
    UnsupportedVersion(u8, u8),
    #[error("unsupported dtype {0:?}; expected '<f4' or '<f8'")]
    UnsupportedDtype(String),
    #[error("column-major (fortran_order) tensors are not supported")]
    FortranOrder,
    #[error("expected a 2-D tensor, found shape {0:?}")]
    UnsupportedRank(Vec<usize>),
    #[error("malformed NPY header: {0}")]
    BadHeader(String),
    #[error("payload holds {found} bytes but shape {rows}x{cols} needs {expected}")]
    ShapeMismatch { rows: usize, cols: usize, expected: usize, found: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, NpyError>;

/// Header dictionary text as written by numpy, without padding.
fn header_dict(dtype: Dtype, rows: usize, cols: usize) -> String {
    format!("{{'descr': '{}', 'fortran_order': False, 'shape': ({}, {}), }}", dtype.descr(), rows, cols)
}

/// Spare spaces numpy leaves after the dict so the leading axis can grow in place.
const GROWTH_AXIS_MAX_DIGITS: usize = 21;

/// Full preamble: magic, version, length and the padded header.
///
/// Padding follows numpy's writer, so files saved by `numpy.save` come back
/// byte for byte.
pub fn encode_header(dtype: Dtype, rows: usize, cols: usize) -> Vec<u8> {
    let mut dict = header_dict(dtype, rows, cols);
    dict.extend(std::iter::repeat_n(' ', GROWTH_AXIS_MAX_DIGITS.saturating_sub(rows.to_string().len())));
    let fixed = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = ALIGN - fixed % ALIGN;
    let total = fixed + pad;
    let header_len = total - MAGIC.len() - 4;

    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.resize(total - 1, b' ');
    out.push(b'\n');
    out
}

/// Value of `key` in a Python dict literal, as raw text.
fn dict_value<'a>(dict: &'a str, key: &str) -> Result<&'a str> {
    let needle = format!("'{key}':");
    let start = dict
        .find(&needle)
        .ok_or_else(|| NpyError::BadHeader(format!("missing key '{key}'")))?
        + needle.len();
    let rest = dict[start..].trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')').map(|i| i + 1)
    } else if let Some(body) = rest.strip_prefix('\'') {
        body.find('\'').map(|i| i + 2)
    } else {
        rest.find([',', '}'])
    }
    .ok_or_else(|| NpyError::BadHeader(format!("unterminated value for '{key}'")))?;
    Ok(rest[..end].trim())
}

fn parse_header(dict: &str) -> Result<TensorHeader> {
    let descr = dict_value(dict, "descr")?.trim_matches('\'');
    let dtype = match descr {
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        other => return Err(NpyError::UnsupportedDtype(other.to_string())),
    };
    let fortran_order = match dict_value(dict, "fortran_order")? {
        "False" => false,
        "True" => true,
        other => return Err(NpyError::BadHeader(format!("fortran_order = {other}"))),
    };
    let shape_text = dict_value(dict, "shape")?;
    let inner = shape_text
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| NpyError::BadHeader(format!("shape = {shape_text}")))?;
    let dims = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| NpyError::BadHeader(format!("shape = {shape_text}"))))
        .collect::<Result<Vec<_>>>()?;
    if fortran_order {
        return Err(NpyError::FortranOrder);
    }
    match dims[..] {
        [rows, cols] => Ok(TensorHeader { dtype, shape: (rows, cols), fortran_order }),
        _ => Err(NpyError::UnsupportedRank(dims)),
    }
}

pub fn read_header<R: Read>(reader: &mut R) -> Result<TensorHeader> {
    let mut magic = [0u8; 6];
    reader.read_exact(&mut magic).map_err(|_| NpyError::BadMagic)?;
    if &magic != MAGIC {
        return Err(NpyError::BadMagic);
    }
    let mut version = [0u8; 2];
    reader.read_exact(&mut version)?;
    if version != [1, 0] {
        return Err(NpyError::UnsupportedVersion(version[0], version[1]));
    }
    let mut len = [0u8; 2];
    reader.read_exact(&mut len)?;
    let mut dict = vec![0u8; u16::from_le_bytes(len) as usize];
    reader.read_exact(&mut dict)?;
    let dict = std::str::from_utf8(&dict).map_err(|_| NpyError::BadHeader("header is not ASCII".into()))?;
    parse_header(dict)
}

pub fn read_npy_from<R: Read>(reader: &mut R) -> Result<DenseMatrix> {
    let header = read_header(reader)?;
    let (rows, cols) = header.shape;
    let size = header.dtype.size();
    let expected = rows * cols * size;

    let mut payload = Vec::with_capacity(expected);
    reader.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(NpyError::ShapeMismatch { rows, cols, expected, found: payload.len() });
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F64 => payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
        Dtype::F32 => {
            payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect()
        }
    };
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(NpyError::NonFinite { row: i / cols.max(1), col: i % cols.max(1) });
    }
    Ok(DenseMatrix::new(rows, cols, data).expect("payload length checked"))
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    read_npy_from(&mut BufReader::new(File::open(path)?))
}

pub fn write_npy_to<W: Write>(m: &DenseMatrix, dtype: Dtype, writer: &mut W) -> Result<()> {
    let lossy = |v: &f64| !v.is_finite() || (dtype == Dtype::F32 && !(*v as f32).is_finite());
    if let Some(i) = m.as_slice().iter().position(lossy) {
        let cols = m.cols().max(1);
        return Err(NpyError::NonFinite { row: i / cols, col: i % cols });
    }
    writer.write_all(&encode_header(dtype, m.rows(), m.cols()))?;
    match dtype {
        Dtype::F64 => m.as_slice().iter().try_for_each(|v| writer.write_all(&v.to_le_bytes()))?,
        Dtype::F32 => m.as_slice().iter().try_for_each(|v| writer.write_all(&(*v as f32).to_le_bytes()))?,
    }
    Ok(())
}

pub fn write_npy(m: &DenseMatrix, dtype: Dtype, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_npy_to(m, dtype, &mut writer)?;
    writer.flush()?;
    Ok(())
}
