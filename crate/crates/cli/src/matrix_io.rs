//! The `OTMX` binary matrix format and CSV import.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "OTMX"
//! 4       2     version (u16 LE), currently 1
//! 6       1     dtype: 0 = f32, 1 = f64
//! 7       8     rows m (u64 LE)
//! 15      8     cols n (u64 LE)
//! 23      1     layout: 0 = column-major, 1 = row-major
//! 24      ...   m * n little-endian values
//! ```
//!
//! Vectors are stored as single-column matrices.

use std::fs;
use std::path::Path;

use drot_core::Matrix;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"OTMX";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum MatrixIoError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not an OTMX file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported OTMX version {0}")]
    VersionUnsupported(u16),
    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),
    #[error("unknown layout tag {0}")]
    UnknownLayout(u8),
    #[error("payload size mismatch: header implies {expected} bytes, found {found}")]
    SizeMismatch { expected: u64, found: u64 },
    #[error("ragged CSV: line {line} has {found} fields, expected {expected}")]
    RaggedCsv { line: u64, expected: usize, found: usize },
    #[error("CSV line {line}, field {field}: cannot parse {text:?} as a number")]
    BadNumber { line: u64, field: usize, text: String },
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("expected a vector (one column), found {rows}x{cols}")]
    NotAVector { rows: usize, cols: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn size(self) -> u64 {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Layout {
    #[default]
    ColMajor,
    RowMajor,
}

/// Parsed header of an `OTMX` buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub version: u16,
    pub dtype: Dtype,
    pub rows: u64,
    pub cols: u64,
    pub layout: Layout,
}

pub fn decode_header(bytes: &[u8]) -> Result<Header, MatrixIoError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(MatrixIoError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(MatrixIoError::SizeMismatch { expected: HEADER_LEN as u64, found: bytes.len() as u64 });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(MatrixIoError::VersionUnsupported(version));
    }
    let dtype = match bytes[6] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        t => return Err(MatrixIoError::UnknownDtype(t)),
    };
    let rows = u64::from_le_bytes(bytes[7..15].try_into().expect("8 bytes"));
    let cols = u64::from_le_bytes(bytes[15..23].try_into().expect("8 bytes"));
    let layout = match bytes[23] {
        0 => Layout::ColMajor,
        1 => Layout::RowMajor,
        t => return Err(MatrixIoError::UnknownLayout(t)),
    };
    Ok(Header { version, dtype, rows, cols, layout })
}

/// Decodes a whole `OTMX` buffer. `f32` payloads are widened.
pub fn decode_matrix(bytes: &[u8]) -> Result<Matrix, MatrixIoError> {
    let header = decode_header(bytes)?;
    let found = (bytes.len() - HEADER_LEN) as u64;
    let expected = header
        .rows
        .checked_mul(header.cols)
        .and_then(|cells| cells.checked_mul(header.dtype.size()));
    let Some(expected) = expected.filter(|&e| e == found) else {
        return Err(MatrixIoError::SizeMismatch { expected: expected.unwrap_or(u64::MAX), found });
    };
    // the payload fits in memory, so both dimensions fit in usize
    let (m, n) = (header.rows as usize, header.cols as usize);
    let payload = &bytes[HEADER_LEN..HEADER_LEN + expected as usize];
    let values: Vec<f64> = match header.dtype {
        Dtype::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
        Dtype::F32 => {
            payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect()
        }
    };
    let matrix = match header.layout {
        Layout::ColMajor => Matrix::from_col_major(m, n, values),
        Layout::RowMajor => Matrix::from_row_major(m, n, &values),
    };
    Ok(matrix.expect("length checked against the header"))
}

/// Encodes column-major; `f32` output rounds each entry.
pub fn encode_matrix(matrix: &Matrix, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.as_slice().len() * dtype.size() as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype.tag());
    out.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.cols() as u64).to_le_bytes());
    out.push(0);
    for &v in matrix.as_slice() {
        match dtype {
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MatrixIoError + '_ {
    move |source| MatrixIoError::Io { path: path.display().to_string(), source }
}

pub fn read_matrix(path: &Path) -> Result<Matrix, MatrixIoError> {
    decode_matrix(&fs::read(path).map_err(io_err(path))?)
}

pub fn write_matrix(path: &Path, matrix: &Matrix, dtype: Dtype) -> Result<(), MatrixIoError> {
    fs::write(path, encode_matrix(matrix, dtype)).map_err(io_err(path))
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>, MatrixIoError> {
    let m = read_matrix_any(path)?;
    vector_from_matrix(m)
}

/// Accepts a single column, or a single row (as CSV files often hold).
pub fn vector_from_matrix(m: Matrix) -> Result<Vec<f64>, MatrixIoError> {
    if m.cols() == 1 || m.rows() == 1 {
        Ok(m.into_vec())
    } else {
        Err(MatrixIoError::NotAVector { rows: m.rows(), cols: m.cols() })
    }
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<(), MatrixIoError> {
    let m = Matrix::from_col_major(v.len(), 1, v.to_vec()).expect("single column");
    write_matrix(path, &m, Dtype::F64)
}

/// Parses headerless comma-separated decimal rows.
pub fn parse_csv(text: &[u8]) -> Result<Matrix, MatrixIoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| MatrixIoError::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(field, s)| {
                s.parse::<f64>().map_err(|_| MatrixIoError::BadNumber { line, field, text: s.to_string() })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(MatrixIoError::RaggedCsv { line, expected: first.len(), found: row.len() });
            }
        }
        rows.push(row);
    }
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Matrix::from_row_major(m, n, &flat).expect("rows checked equal"))
}

pub fn read_csv(path: &Path) -> Result<Matrix, MatrixIoError> {
    parse_csv(&fs::read(path).map_err(io_err(path))?)
}

/// CSV when the extension says so, `OTMX` otherwise.
pub fn read_matrix_any(path: &Path) -> Result<Matrix, MatrixIoError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_csv(path),
        _ => read_matrix(path),
    }
}

/// Writes rows of `f64` with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}
