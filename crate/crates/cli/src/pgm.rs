//! Netpbm grayscale images: P2 and P5 in, P5 out.
//!
//! Samples are mapped to `[0, 1]` by `value / maxval`. For `maxval > 255`
//! binary samples are two bytes, most significant first.

use std::fs;
use std::path::Path;

use tvreg::{Field, ScalarField};

use crate::error::{CliError, CliResult};

/// Largest maxval allowed by the format.
pub const MAX_MAXVAL: u32 = 65535;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' && self.bytes[self.pos] != b'\r' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    /// Next unsigned decimal token and the offset where it starts.
    fn number(&mut self, what: &str) -> Result<(u32, usize), (usize, String)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if start == self.bytes.len() {
                (start, format!("unexpected end of file, expected {what}"))
            } else {
                (start, format!("expected {what}, found byte 0x{:02x}", self.bytes[start]))
            });
        }
        if self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            return Err((self.pos, format!("malformed {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse::<u32>().map(|v| (v, start)).map_err(|_| (start, format!("{what} out of range")))
    }
}

/// Parses a P2 or P5 image held in memory.
pub fn parse_pgm(bytes: &[u8]) -> Result<ScalarField, (usize, String)> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err((0, "missing netpbm magic number".into()));
    }
    let binary = match bytes[1] {
        b'2' => false,
        b'5' => true,
        b'3' | b'6' => return Err((0, "color PPM images are not supported; convert to grayscale PGM".into())),
        b'1' | b'4' => return Err((0, "bitmap PBM images are not supported; convert to grayscale PGM".into())),
        _ => return Err((0, "unknown netpbm magic number".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() && bytes[cur.pos] != b'#' {
        return Err((cur.pos, "magic number must be followed by whitespace".into()));
    }
    let (width, wpos) = cur.number("width")?;
    let (height, hpos) = cur.number("height")?;
    let (maxval, mpos) = cur.number("maxval")?;
    if width == 0 {
        return Err((wpos, "width must be positive".into()));
    }
    if height == 0 {
        return Err((hpos, "height must be positive".into()));
    }
    if maxval == 0 || maxval > MAX_MAXVAL {
        return Err((mpos, format!("maxval must be in 1..={MAX_MAXVAL}, got {maxval}")));
    }
    let (w, h) = (width as usize, height as usize);
    let n = w.checked_mul(h).ok_or((wpos, "image dimensions overflow".to_string()))?;
    let scale = 1.0 / maxval as f64;
    let mut values = Vec::with_capacity(n.min(1 << 24));

    if binary {
        if cur.pos >= bytes.len() {
            return Err((cur.pos, "truncated header: missing whitespace after maxval".into()));
        }
        let payload = &bytes[cur.pos + 1..];
        let start = cur.pos + 1;
        let bps = if maxval > 255 { 2 } else { 1 };
        let need = n.checked_mul(bps).ok_or((wpos, "image dimensions overflow".to_string()))?;
        if payload.len() != need {
            return Err((
                start + payload.len().min(need),
                format!("P5 payload has {} bytes, expected {need}", payload.len()),
            ));
        }
        for k in 0..n {
            let v = if bps == 1 {
                payload[k] as u32
            } else {
                u16::from_be_bytes([payload[2 * k], payload[2 * k + 1]]) as u32
            };
            if v > maxval {
                return Err((start + k * bps, format!("sample {v} exceeds maxval {maxval}")));
            }
            values.push(v as f64 * scale);
        }
    } else {
        for _ in 0..n {
            let (v, pos) = cur.number("sample")?;
            if v > maxval {
                return Err((pos, format!("sample {v} exceeds maxval {maxval}")));
            }
            values.push(v as f64 * scale);
        }
        cur.skip_space_and_comments();
        if cur.pos != bytes.len() {
            return Err((cur.pos, "trailing data after the last sample".into()));
        }
    }
    Field::new(w, h, values).map_err(|e| (0, e.to_string()))
}

pub fn read_pgm(path: &Path) -> CliResult<ScalarField> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_pgm(&bytes).map_err(|(offset, message)| CliError::Parse { path: path.to_path_buf(), offset, message })
}

/// Quantizes to `round_half_up(clamp(v, 0, 1) · maxval)`.
pub fn quantize(v: f64, maxval: u32) -> u32 {
    (v.clamp(0.0, 1.0) * maxval as f64 + 0.5).floor() as u32
}

/// Encodes a binary P5 image.
pub fn encode_pgm(f: &ScalarField, maxval: u32) -> CliResult<Vec<u8>> {
    if maxval == 0 || maxval > MAX_MAXVAL {
        return Err(CliError::Usage(format!("maxval must be in 1..={MAX_MAXVAL}, got {maxval}")));
    }
    let mut out = format!("P5\n{} {}\n{}\n", f.width(), f.height(), maxval).into_bytes();
    for &v in f.values() {
        let q = quantize(v, maxval);
        if maxval > 255 {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, f: &ScalarField, maxval: u32) -> CliResult<()> {
    let bytes = encode_pgm(f, maxval)?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
