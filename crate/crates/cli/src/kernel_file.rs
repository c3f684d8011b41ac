//! Blur kernels on the command line: a built-in name or a text file.
//!
//! Text kernels hold one row per line, weights separated by whitespace or
//! commas; `#` starts a comment. Both dimensions must be odd.

use std::fs;
use std::path::Path;

use tvreg::fixtures::{diagonal_kernel3, motion_kernel3};
use tvreg::{Kernel, Kernel2};

use crate::error::{CliError, CliResult};

/// Names accepted by [`builtin_kernel`].
pub const KERNEL_NAMES: [&str; 5] = ["delta", "motion3", "diag3", "box3", "box5"];

pub fn builtin_kernel(name: &str) -> Option<Kernel2> {
    match name {
        "delta" => Some(Kernel::delta()),
        "motion3" => Some(motion_kernel3()),
        "diag3" => Some(diagonal_kernel3()),
        "box3" => Kernel::box_filter(3).ok(),
        "box5" => Kernel::box_filter(5).ok(),
        _ => None,
    }
}

pub fn parse_kernel(text: &str) -> Result<Kernel2, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| format!("line {}: {t:?}: {e}", n + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        if !row.is_empty() {
            rows.push(row);
        }
    }
    let width = rows.first().map(Vec::len).ok_or("kernel file has no weights")?;
    if let Some(bad) = rows.iter().position(|r| r.len() != width) {
        return Err(format!("kernel row {} has {} weights, expected {width}", bad + 1, rows[bad].len()));
    }
    Kernel::new(width, rows.len(), rows.concat()).map_err(|e| e.to_string())
}

pub fn format_kernel(k: &Kernel2) -> String {
    let mut out = String::new();
    for b in 0..k.height() {
        let row: Vec<String> = (0..k.width()).map(|a| k.get(a, b).to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Resolves `spec` as a built-in name first, then as a path.
pub fn load_kernel(spec: &str) -> CliResult<Kernel2> {
    if let Some(k) = builtin_kernel(spec) {
        return Ok(k);
    }
    let path = Path::new(spec);
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_kernel(&text).map_err(|message| CliError::Format { path: path.to_path_buf(), message })
}

pub fn write_kernel(path: &Path, k: &Kernel2) -> CliResult<()> {
    fs::write(path, format_kernel(k)).map_err(|e| CliError::io(path, e))
}
