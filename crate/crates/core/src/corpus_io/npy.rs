//! Reader/writer for the NumPy NPY binary format, versions 1.0 and 2.0.
//!
//! Only 2-D arrays of little-endian IEEE floats (`<f4`, `<f8`) are accepted.
//! Fortran-order files are transposed into row-major on read. Writes always
//! produce version 1.0, `<f8`, C-order, so a write/read round trip is
//! bit-exact for f64 data.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::matrix::Matrix;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Error)]
pub enum NpyError {
    #[error("malformed NPY header at byte {offset}: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("unsupported NPY element type {descr:?} at byte {offset} (expected '<f4' or '<f8')")]
    UnsupportedElementType { descr: String, offset: usize },
    #[error("NPY array has {ndim} dimension(s) at byte {offset}; only 2-D arrays are supported")]
    NonTwoDimensional { ndim: usize, offset: usize },
    #[error("truncated NPY payload at byte {offset}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("cannot write an empty matrix")]
    EmptyMatrix,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ElementType {
    F4,
    F8,
}

impl ElementType {
    fn size(self) -> usize {
        match self {
            ElementType::F4 => 4,
            ElementType::F8 => 8,
        }
    }
}

struct HeaderInfo {
    element: ElementType,
    fortran_order: bool,
    shape: Vec<usize>,
    payload_offset: usize,
}

/// Reads a 2-D NPY file into an f64 matrix (`<f4` entries are widened).
pub fn read_npy(path: &Path) -> Result<Matrix<f64>, NpyError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_npy_bytes(&bytes)
}

/// Parses NPY content from an in-memory buffer.
pub fn read_npy_bytes(bytes: &[u8]) -> Result<Matrix<f64>, NpyError> {
    let header = parse_header(bytes)?;
    let (rows, cols) = (header.shape[0], header.shape[1]);
    let n = rows * cols;
    let expected = n * header.element.size();
    let payload = &bytes[header.payload_offset.min(bytes.len())..];
    if payload.len() < expected {
        return Err(NpyError::TruncatedPayload {
            offset: header.payload_offset + payload.len(),
            expected,
            found: payload.len(),
        });
    }

    let mut values = Vec::with_capacity(n);
    match header.element {
        ElementType::F4 => {
            for chunk in payload[..expected].chunks_exact(4) {
                values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        ElementType::F8 => {
            for chunk in payload[..expected].chunks_exact(8) {
                values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
    }

    if header.fortran_order {
        // Stored column-major: element (i, j) sits at j * rows + i.
        let col_major = Matrix::from_vec(cols, rows, values);
        Ok(col_major.transpose())
    } else {
        Ok(Matrix::from_vec(rows, cols, values))
    }
}

fn parse_header(bytes: &[u8]) -> Result<HeaderInfo, NpyError> {
    if bytes.len() < 8 {
        return Err(NpyError::MalformedHeader {
            offset: bytes.len(),
            reason: "file shorter than magic + version".into(),
        });
    }
    if &bytes[..6] != MAGIC {
        return Err(NpyError::MalformedHeader {
            offset: 0,
            reason: "missing \\x93NUMPY magic string".into(),
        });
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, dict_start) = match major {
        1 => {
            if bytes.len() < 10 {
                return Err(NpyError::MalformedHeader {
                    offset: 8,
                    reason: "missing v1.0 header length".into(),
                });
            }
            (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10)
        }
        2 => {
            if bytes.len() < 12 {
                return Err(NpyError::MalformedHeader {
                    offset: 8,
                    reason: "missing v2.0 header length".into(),
                });
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        _ => {
            return Err(NpyError::MalformedHeader {
                offset: 6,
                reason: format!("unsupported NPY version {major}.{minor}"),
            })
        }
    };

    let payload_offset = dict_start + header_len;
    if bytes.len() < payload_offset {
        return Err(NpyError::MalformedHeader {
            offset: bytes.len(),
            reason: "header dictionary truncated".into(),
        });
    }
    let dict = std::str::from_utf8(&bytes[dict_start..payload_offset]).map_err(|e| {
        NpyError::MalformedHeader {
            offset: dict_start + e.valid_up_to(),
            reason: "header dictionary is not valid UTF-8".into(),
        }
    })?;

    let descr = extract_quoted(dict, "descr").ok_or_else(|| NpyError::MalformedHeader {
        offset: dict_start,
        reason: "missing 'descr' key".into(),
    })?;
    let element = match descr.as_str() {
        "<f4" => ElementType::F4,
        "<f8" => ElementType::F8,
        other => {
            return Err(NpyError::UnsupportedElementType {
                descr: other.to_string(),
                offset: dict_start,
            })
        }
    };

    let fortran_order = if dict_value_is(dict, "fortran_order", "True") {
        true
    } else if dict_value_is(dict, "fortran_order", "False") {
        false
    } else {
        return Err(NpyError::MalformedHeader {
            offset: dict_start,
            reason: "missing or non-boolean 'fortran_order' key".into(),
        });
    };

    let shape = extract_shape(dict).ok_or_else(|| NpyError::MalformedHeader {
        offset: dict_start,
        reason: "missing or malformed 'shape' tuple".into(),
    })?;
    if shape.len() != 2 {
        return Err(NpyError::NonTwoDimensional {
            ndim: shape.len(),
            offset: dict_start,
        });
    }

    Ok(HeaderInfo {
        element,
        fortran_order,
        shape,
        payload_offset,
    })
}

fn key_position(dict: &str, key: &str) -> Option<usize> {
    let quoted = format!("'{key}'");
    let at = dict.find(&quoted)?;
    let rest = &dict[at + quoted.len()..];
    let colon = rest.find(':')?;
    Some(at + quoted.len() + colon + 1)
}

fn extract_quoted(dict: &str, key: &str) -> Option<String> {
    let after = &dict[key_position(dict, key)?..];
    let open = after.find('\'')?;
    let rest = &after[open + 1..];
    let close = rest.find('\'')?;
    Some(rest[..close].to_string())
}

fn dict_value_is(dict: &str, key: &str, value: &str) -> bool {
    match key_position(dict, key) {
        Some(pos) => dict[pos..].trim_start().starts_with(value),
        None => false,
    }
}

fn extract_shape(dict: &str) -> Option<Vec<usize>> {
    let after = &dict[key_position(dict, "shape")?..];
    let open = after.find('(')?;
    let close = after[open..].find(')')? + open;
    after[open + 1..close]
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().ok())
        .collect()
}

/// Writes a matrix as NPY v1.0, `<f8`, C-order.
pub fn write_npy(matrix: &Matrix<f64>, path: &Path) -> Result<(), NpyError> {
    if matrix.is_empty() {
        return Err(NpyError::EmptyMatrix);
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_npy_to(matrix, &mut w)
}

pub fn write_npy_to(matrix: &Matrix<f64>, w: &mut impl Write) -> Result<(), NpyError> {
    if matrix.is_empty() {
        return Err(NpyError::EmptyMatrix);
    }
    let dict = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        matrix.nrows(),
        matrix.ncols()
    );
    // Total header (magic + version + len + dict + padding + '\n') must be a
    // multiple of 64.
    let unpadded = 10 + dict.len() + 1;
    let padding = (64 - unpadded % 64) % 64;
    let header_len = (dict.len() + padding + 1) as u16;

    w.write_all(MAGIC)?;
    w.write_all(&[1, 0])?;
    w.write_all(&header_len.to_le_bytes())?;
    w.write_all(dict.as_bytes())?;
    w.write_all(&vec![b' '; padding])?;
    w.write_all(b"\n")?;
    for v in matrix.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}
