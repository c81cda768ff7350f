//! `.field` files: one line of JSON header, a newline, then the raw
//! little-endian samples.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Field, Grid};

pub const FIELD_FORMAT: &str = "fnls-field";
pub const FIELD_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub side_length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_used: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_used: Option<f64>,
    pub is_real: bool,
    /// `"f64"` or `"c128"`.
    pub dtype: String,
    pub byte_order: String,
    /// Number of samples.
    pub len: usize,
}

/// Solver parameters stored alongside a field.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldMeta {
    pub s_used: Option<f64>,
    pub alpha_used: Option<f64>,
}

pub fn encode_field(u: &Field, meta: FieldMeta) -> Result<Vec<u8>> {
    let g = u.grid();
    let real = u.is_real() && u.values().iter().all(|v| v.im == 0.0);
    let header = FieldHeader {
        format: FIELD_FORMAT.into(),
        version: FIELD_VERSION,
        dim: g.dim(),
        n: g.n(),
        side_length: g.side_length(),
        s_used: meta.s_used,
        alpha_used: meta.alpha_used,
        is_real: u.is_real(),
        dtype: if real { "f64" } else { "c128" }.into(),
        byte_order: "little".into(),
        len: u.values().len(),
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    out.reserve(u.values().len() * if real { 8 } else { 16 });
    for v in u.values() {
        out.extend_from_slice(&v.re.to_le_bytes());
        if !real {
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_field(bytes: &[u8]) -> Result<(Field, FieldMeta)> {
    let split = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::CorruptField("missing header terminator".into()))?;
    let header: FieldHeader = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::CorruptField(format!("unreadable header: {e}")))?;
    if header.format != FIELD_FORMAT {
        return Err(Error::CorruptField(format!("unknown format tag {:?}", header.format)));
    }
    if header.version != FIELD_VERSION {
        return Err(Error::CorruptField(format!(
            "field format version {} is not supported (expected {FIELD_VERSION})",
            header.version
        )));
    }
    if header.byte_order != "little" {
        return Err(Error::CorruptField(format!("unsupported byte order {:?}", header.byte_order)));
    }
    let width = match header.dtype.as_str() {
        "f64" => 8,
        "c128" => 16,
        other => return Err(Error::CorruptField(format!("unsupported dtype {other:?}"))),
    };
    let grid = Grid::new(header.dim, header.n, header.side_length)
        .map_err(|e| Error::CorruptField(format!("header describes an invalid grid: {e}")))?;
    let payload = &bytes[split + 1..];
    if header.len != grid.len() || payload.len() != header.len * width {
        return Err(Error::CorruptField(format!(
            "payload holds {} bytes, header promises {} samples of {width} bytes on a grid of {}",
            payload.len(),
            header.len,
            grid.len()
        )));
    }
    let word = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
    let values: Vec<Complex64> = if width == 8 {
        payload.chunks_exact(8).map(|c| Complex64::new(word(c), 0.0)).collect()
    } else {
        payload.chunks_exact(16).map(|c| Complex64::new(word(&c[..8]), word(&c[8..]))).collect()
    };
    let field = Field::from_values(&grid, values, header.is_real)
        .map_err(|e| Error::CorruptField(format!("bad samples: {e}")))?;
    Ok((field, FieldMeta { s_used: header.s_used, alpha_used: header.alpha_used }))
}

pub fn write_field(path: impl AsRef<Path>, u: &Field, meta: FieldMeta) -> Result<()> {
    fs::write(path, encode_field(u, meta)?)?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    Ok(read_field_with_meta(path)?.0)
}

pub fn read_field_with_meta(path: impl AsRef<Path>) -> Result<(Field, FieldMeta)> {
    decode_field(&fs::read(path)?)
}
