//! Spectrogram dumps.
//!
//! CSV has one line per frequency bin and one column per frame. The binary
//! form is `d: u32 LE`, `t: u32 LE`, then `d * t` little-endian `f32`
//! values in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ehnet_core::Matrix;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpFormat {
    Csv,
    Binary,
}

impl DumpFormat {
    /// `.csv` selects CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DumpFormat::Csv,
            _ => DumpFormat::Binary,
        }
    }
}

pub fn to_csv(m: &Matrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{v:e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn encode_binary(m: &Matrix<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * m.as_slice().len());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Matrix<f32>> {
    let bad = |detail: String| Error::parse("spectrogram dump", detail);
    if bytes.len() < 8 {
        return Err(bad("shorter than the 8-byte header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (d, t) = (word(0), word(4));
    let body = &bytes[8..];
    if body.len() != 4 * d * t {
        return Err(bad(format!(
            "header says {d}x{t} but body holds {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Matrix::from_vec(d, t, data)?)
}

pub fn write_dump(path: &Path, m: &Matrix<f64>, format: DumpFormat) -> Result<()> {
    let bytes = match format {
        DumpFormat::Csv => to_csv(m).into_bytes(),
        DumpFormat::Binary => encode_binary(&m.map(|v| v as f32)),
    };
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn read_binary_dump(path: &Path) -> Result<Matrix<f32>> {
    decode_binary(&fs::read(path).map_err(Error::io(path))?)
}
