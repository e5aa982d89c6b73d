//! Matrix and label file formats.
//!
//! * csv: header row `latent_<id>,...`, comma separated, `.` decimal, no
//!   quoting. Values are written with the shortest representation that
//!   parses back to the same `f64`.
//! * raw-f32: 16-byte header (`KNF1`, `u32` rows, `u32` cols, `u32` reserved
//!   zero), then little-endian `f32` values in row-major order. Column ids
//!   live in a sidecar text file `<path>.ids`, one per line; when the sidecar
//!   is missing the ids default to `0..p`.
//! * labels: one ASCII integer per line, LF terminated.
//!
//! Row numbers in errors are 0-based data rows (the csv header is not
//! counted).

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{check_finite, FeatureMatrix, LabelVector};

pub const RAW_MAGIC: &[u8; 4] = b"KNF1";
pub const RAW_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFormat {
    Csv,
    RawF32,
}

impl MatrixFormat {
    /// Guesses the format from a file extension (`.csv` or anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::RawF32,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "raw-f32" | "raw" => Ok(MatrixFormat::RawF32),
            other => Err(Error::config(format!(
                "unknown matrix format {other:?} (expected csv or raw-f32)"
            ))),
        }
    }
}

impl fmt::Display for MatrixFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::RawF32 => "raw-f32",
        })
    }
}

/// Path of the column-id sidecar belonging to a raw-f32 matrix file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<FeatureMatrix> {
    match format {
        MatrixFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_csv(&text)
        }
        MatrixFormat::RawF32 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let sidecar = sidecar_path(path);
            let ids = if sidecar.exists() {
                let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
                Some(parse_ids(&text)?)
            } else {
                None
            };
            parse_raw(&bytes, ids)
        }
    }
}

pub fn save_matrix(m: &FeatureMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    // FeatureMatrix is finite by construction, but the f32 narrowing can
    // still overflow.
    check_finite(m.values())?;
    match format {
        MatrixFormat::Csv => write_file(path, csv_bytes(m).as_bytes()),
        MatrixFormat::RawF32 => {
            let bytes = raw_bytes(m)?;
            write_file(path, &bytes)?;
            let ids: String = m.column_ids().iter().map(|id| format!("{id}\n")).collect();
            write_file(&sidecar_path(path), ids.as_bytes())
        }
    }
}

pub fn load_labels(path: &Path) -> Result<LabelVector> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn save_labels(labels: &LabelVector, path: &Path) -> Result<()> {
    let text: String = labels.values().iter().map(|v| format!("{v}\n")).collect();
    write_file(path, text.as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text.lines().collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    lines
}

pub fn parse_csv(text: &str) -> Result<FeatureMatrix> {
    let lines = data_lines(text);
    let Some((header, body)) = lines.split_first() else {
        return Err(Error::NoRows);
    };
    let ids = header
        .split(',')
        .enumerate()
        .map(|(j, h)| {
            h.trim()
                .strip_prefix("latent_")
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::Parse {
                    row: 0,
                    col: Some(j),
                    msg: format!("malformed header field {h:?} (expected latent_<id>)"),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    if body.is_empty() {
        return Err(Error::NoRows);
    }
    let p = ids.len();
    let n = body.len();
    let mut values = DMatrix::zeros(n, p);
    for (i, line) in body.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p {
            return Err(Error::Parse {
                row: i,
                col: None,
                msg: format!("expected {p} fields, found {}", fields.len()),
            });
        }
        for (j, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: i,
                col: Some(j),
                msg: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            values[(i, j)] = v;
        }
    }
    FeatureMatrix::new(values, ids)
}

pub fn csv_bytes(m: &FeatureMatrix) -> String {
    let mut out = String::new();
    let header: Vec<String> = m.column_ids().iter().map(|id| format!("latent_{id}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    let v = m.values();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", v[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_raw(bytes: &[u8], ids: Option<Vec<usize>>) -> Result<FeatureMatrix> {
    if bytes.is_empty() {
        return Err(Error::NoRows);
    }
    if bytes.len() < RAW_HEADER_LEN || &bytes[..4] != RAW_MAGIC {
        return Err(Error::Parse {
            row: 0,
            col: None,
            msg: "missing KNF1 header".into(),
        });
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap()) as usize;
    let (n, p) = (word(1), word(2));
    if n == 0 {
        return Err(Error::NoRows);
    }
    let expected = n
        .checked_mul(p)
        .and_then(|np| np.checked_mul(4))
        .and_then(|b| b.checked_add(RAW_HEADER_LEN));
    if expected != Some(bytes.len()) {
        return Err(Error::Parse {
            row: 0,
            col: None,
            msg: format!(
                "header declares {n}x{p} but payload has {} bytes",
                bytes.len() - RAW_HEADER_LEN
            ),
        });
    }
    let payload = &bytes[RAW_HEADER_LEN..];
    let mut values = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let off = 4 * (i * p + j);
            let v = f32::from_le_bytes(payload[off..off + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            values[(i, j)] = f64::from(v);
        }
    }
    let ids = ids.unwrap_or_else(|| (0..p).collect());
    FeatureMatrix::new(values, ids)
}

pub fn raw_bytes(m: &FeatureMatrix) -> Result<Vec<u8>> {
    let (n, p) = (m.nrows(), m.ncols());
    let as_u32 = |x: usize| {
        u32::try_from(x).map_err(|_| Error::InvalidInput(format!("dimension {x} exceeds u32")))
    };
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 4 * n * p);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&as_u32(n)?.to_le_bytes());
    out.extend_from_slice(&as_u32(p)?.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    let v = m.values();
    for i in 0..n {
        for j in 0..p {
            let x = v[(i, j)] as f32;
            if !x.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

fn parse_ids(text: &str) -> Result<Vec<usize>> {
    data_lines(text)
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                row: i,
                col: None,
                msg: format!("bad column id {l:?} in sidecar"),
            })
        })
        .collect()
}

pub fn parse_labels(text: &str) -> Result<LabelVector> {
    let values = data_lines(text)
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let t = l.trim();
            match t.parse::<i64>() {
                Ok(0) => Ok(0u8),
                Ok(1) => Ok(1u8),
                Ok(_) => Err(Error::LabelOutOfRange {
                    line: i + 1,
                    value: t.to_string(),
                }),
                Err(_) => Err(Error::Parse {
                    row: i,
                    col: None,
                    msg: format!("not an integer label: {t:?}"),
                }),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    LabelVector::new(values)
}
