//! Middlebury `.flo` files: `PIEH`, little-endian `i32` width and height,
//! then interleaved `f32` `(u, v)` pairs in row-major order.

use std::fs;
use std::path::Path;

use tvreg::{Field, VectorField2};

use crate::error::{CliError, CliResult};

pub const FLO_MAGIC: [u8; 4] = *b"PIEH";
const HEADER_LEN: usize = 12;

pub fn encode_flo(w: &VectorField2) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * w.u.len());
    out.extend_from_slice(&FLO_MAGIC);
    out.extend_from_slice(&(w.width() as i32).to_le_bytes());
    out.extend_from_slice(&(w.height() as i32).to_le_bytes());
    for (&u, &v) in w.u.values().iter().zip(w.v.values()) {
        out.extend_from_slice(&(u as f32).to_le_bytes());
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn parse_flo(bytes: &[u8]) -> Result<VectorField2, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("file has {} bytes, shorter than the 12-byte header", bytes.len()));
    }
    if bytes[..4] != FLO_MAGIC {
        return Err("wrong magic tag, expected PIEH".into());
    }
    let dim = |k: usize| i32::from_le_bytes(bytes[k..k + 4].try_into().unwrap());
    let (w, h) = (dim(4), dim(8));
    if w <= 0 || h <= 0 {
        return Err(format!("invalid dimensions {w}x{h}"));
    }
    let (w, h) = (w as usize, h as usize);
    let need = w.checked_mul(h).and_then(|n| n.checked_mul(8)).ok_or("dimensions overflow")?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != need {
        return Err(format!("payload has {} bytes, expected {need} for {w}x{h}", payload.len()));
    }
    let sample = |k: usize| f32::from_le_bytes(payload[4 * k..4 * k + 4].try_into().unwrap()) as f64;
    let n = w * h;
    let u = Field::new(w, h, (0..n).map(|k| sample(2 * k)).collect()).map_err(|e| e.to_string())?;
    let v = Field::new(w, h, (0..n).map(|k| sample(2 * k + 1)).collect()).map_err(|e| e.to_string())?;
    Ok(VectorField2 { u, v })
}

pub fn read_flo(path: &Path) -> CliResult<VectorField2> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_flo(&bytes).map_err(|message| CliError::Format { path: path.to_path_buf(), message })
}

pub fn write_flo(path: &Path, w: &VectorField2) -> CliResult<()> {
    fs::write(path, encode_flo(w)).map_err(|e| CliError::io(path, e))
}
