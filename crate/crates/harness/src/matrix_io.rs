//! Matrix files.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! offset  size      content
//! 0       8         magic b"SQRKMAT1"
//! 8       8         rows (u64)
//! 16      8         cols (u64)
//! 24      8·r·c     entries (f64), row-major
//! ```
//!
//! The text form is one header line `rows cols` followed by one line per row
//! of whitespace-separated numbers.

use std::io::Write as _;
use std::path::Path;

use seqrank::DenseMatrix;

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"SQRKMAT1";
const HEADER: usize = 24;

pub fn encode(m: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<DenseMatrix, String> {
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err("missing SQRKMAT1 header".into());
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let (rows, cols) = (word(8), word(16));
    let count = rows
        .checked_mul(cols)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or("dimensions overflow")?;
    let expected = count.checked_mul(8).and_then(|b| b.checked_add(HEADER)).ok_or("dimensions overflow")?;
    if bytes.len() != expected {
        return Err(format!(
            "{rows}x{cols} needs {expected} bytes, file has {}",
            bytes.len()
        ));
    }
    let data = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::new(rows as usize, cols as usize, data).map_err(|e| e.to_string())
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    std::fs::write(path, encode(m)).map_err(|e| HarnessError::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode(&bytes).map_err(|message| HarnessError::MatrixFormat {
        path: path.to_path_buf(),
        message,
    })
}

pub fn write_matrix_text(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut buf = Vec::new();
    let io = |e| HarnessError::io(path, e);
    writeln!(buf, "{} {}", m.rows(), m.cols()).map_err(io)?;
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(buf, "{}", line.join(" ")).map_err(io)?;
    }
    std::fs::write(path, buf).map_err(io)
}

pub fn read_matrix_text(path: &Path) -> Result<DenseMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let bad = |message: String| HarnessError::MatrixFormat {
        path: path.to_path_buf(),
        message,
    };
    let mut tokens = text.split_whitespace();
    let mut dim = || -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("header must be `rows cols`".into()))
    };
    let (rows, cols) = (dim()?, dim()?);
    let data = text
        .lines()
        .skip(1)
        .flat_map(str::split_whitespace)
        .map(|t| t.parse::<f64>().map_err(|e| bad(format!("bad entry `{t}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    DenseMatrix::new(rows, cols, data).map_err(|e| bad(e.to_string()))
}
