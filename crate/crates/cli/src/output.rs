//! Number formatting and file emission.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rer_core::ImageGrid;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Formats like C's `%.9g`.
pub fn fmt_g9(x: f64) -> String {
    const PRECISION: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // rounding to 9 digits can carry into the exponent, so take it from the
    // rounded scientific form
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_g9).unwrap_or_default()
}

/// Destination for a command's primary output.
#[derive(Debug, Clone)]
pub enum Sink {
    Stdout,
    File(PathBuf),
}

impl Sink {
    pub fn write(&self, bytes: &[u8]) -> CliResult<()> {
        match self {
            Sink::Stdout => {
                let mut out = std::io::stdout().lock();
                out.write_all(bytes)
                    .and_then(|_| out.flush())
                    .map_err(|e| CliError::io(Path::new("<stdout>"), e))
            }
            Sink::File(path) => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                }
                fs::write(path, bytes).map_err(|e| CliError::io(path, e))
            }
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match self {
            Sink::Stdout => None,
            Sink::File(p) => Some(p),
        }
    }

    /// `name.csv` → `name.csv.json` next to the primary file.
    pub fn sidecar(&self) -> Option<Sink> {
        self.path().map(|p| {
            let mut s = p.as_os_str().to_owned();
            s.push(".json");
            Sink::File(PathBuf::from(s))
        })
    }
}

pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let to_err = |e: csv::Error| CliError::Compute(format!("CSV encoding failed: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| CliError::Compute(format!("CSV encoding failed: {e}")))
}

/// Headerless CSV, one image row per line.
pub fn matrix_csv(grid: &ImageGrid) -> Vec<u8> {
    let mut out = String::new();
    for row in grid.rows() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_g9(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn parse_matrix_csv(path: &Path) -> CliResult<ImageGrid> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    ImageGrid::from_rows(&rows).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::Compute(format!("JSON encoding failed: {e}")))?;
    v.push(b'\n');
    Ok(v)
}
