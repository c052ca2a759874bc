//! Arrays, traces and phase grids on disk.
//!
//! Matrices are CSV with a `# blindcal matrix <rows> <cols>` first line, or
//! `BCAL` binaries: the magic, `u32` version, `u32` rank, a zero `u32`, then
//! one `u64` per dimension and the row-major little-endian `f64` payload. A
//! vector therefore carries a 24-byte header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use blindcal_core::solver::{SolverTrace, TraceRecord};

use crate::error::{Error, Result};
use crate::experiments::{CellResult, TrialRecord};
use blindcal_core::to_db;

pub const MAGIC: &[u8; 4] = b"BCAL";
pub const VERSION: u32 = 1;
const MAX_RANK: usize = 8;

/// Row-major dense array of any rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if len != Some(data.len()) {
            return Err(Error::Config(format!(
                "array of shape {dims:?} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Array { dims, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Array {
            dims: vec![data.len()],
            data,
        }
    }

    /// `(rows, cols)` for ranks 1 (a column) and 2.
    pub fn as_matrix_shape(&self) -> Option<(usize, usize)> {
        match self.dims.as_slice() {
            [len] => Some((*len, 1)),
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }
}

fn is_binary(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("bin") | Some("bcal")
    )
}

/// Writes by extension: `.bin`/`.bcal` as binary, anything else as CSV.
pub fn write_array(path: &Path, array: &Array) -> Result<()> {
    if is_binary(path) {
        write_binary(path, array)
    } else {
        write_matrix_csv(path, array)
    }
}

pub fn read_array(path: &Path) -> Result<Array> {
    if is_binary(path) {
        read_binary(path)
    } else {
        read_matrix_csv(path)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_binary(path: &Path, array: &Array) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 8 * (array.dims.len() + array.data.len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(array.dims.len() as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for &d in &array.dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in &array.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_binary(path: &Path) -> Result<Array> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::format(path, msg);
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("not a BCAL file"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    if word(4) != VERSION {
        return Err(bad(&format!("unsupported BCAL version {}", word(4))));
    }
    let rank = word(8) as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(bad(&format!("unsupported rank {rank}")));
    }
    let header = 16 + 8 * rank;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|k| {
            let at = 16 + 8 * k;
            u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize
        })
        .collect();
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("dimensions overflow"))?;
    if bytes.len() - header != len.checked_mul(8).ok_or_else(|| bad("dimensions overflow"))? {
        return Err(bad(&format!(
            "payload holds {} bytes, shape {dims:?} needs {}",
            bytes.len() - header,
            8 * len
        )));
    }
    let data = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array { dims, data })
}

/// Shortest round-tripping decimal form.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_matrix_csv(path: &Path, array: &Array) -> Result<()> {
    let (rows, cols) = array
        .as_matrix_shape()
        .ok_or_else(|| Error::Config(format!("CSV holds matrices only, got shape {:?}", array.dims)))?;
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "# blindcal matrix {rows} {cols}").map_err(io)?;
    for r in 0..rows {
        let line: Vec<String> = array.data[r * cols..(r + 1) * cols]
            .iter()
            .map(|&v| fmt_f64(v))
            .collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_matrix_csv(path: &Path) -> Result<Array> {
    let mut reader = open(path)?;
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let fields: Vec<&str> = first.split_whitespace().collect();
    let (rows, cols) = match fields.as_slice() {
        ["#", "blindcal", "matrix", r, c] => match (r.parse::<usize>(), c.parse::<usize>()) {
            (Ok(r), Ok(c)) => (r, c),
            _ => return Err(Error::format(path, "bad matrix dimensions in header")),
        },
        _ => return Err(Error::format(path, "missing '# blindcal matrix m n' header")),
    };
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::with_capacity(rows.saturating_mul(cols));
    let mut seen = 0;
    for record in csv.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if record.len() != cols {
            return Err(Error::format(
                path,
                format!("row {} has {} columns, expected {cols}", seen + 1, record.len()),
            ));
        }
        for field in record.iter() {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|_| Error::format(path, format!("not a number: {field:?}")))?,
            );
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::format(path, format!("found {seen} rows, header says {rows}")));
    }
    Ok(Array {
        dims: vec![rows, cols],
        data,
    })
}

pub const TRACE_COLUMNS: [&str; 7] = [
    "iteration",
    "f",
    "mu_xi",
    "mu_gamma",
    "delta",
    "delta_F",
    "elapsed_seconds",
];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_trace_csv(path: &Path, trace: &SolverTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(TRACE_COLUMNS).map_err(err)?;
    for r in &trace.records {
        w.write_record([
            r.iteration.to_string(),
            fmt_f64(r.objective),
            fmt_f64(r.mu_xi),
            fmt_f64(r.mu_gamma),
            opt(r.delta),
            opt(r.delta_f),
            opt(r.elapsed_seconds),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_field<T: std::str::FromStr>(path: &Path, field: &str, column: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::format(path, format!("bad value {field:?} in column {column}")))
}

fn parse_opt(path: &Path, field: &str, column: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_field(path, field, column).map(Some)
    }
}

fn check_header(path: &Path, reader: &mut csv::Reader<BufReader<File>>, want: &[&str]) -> Result<()> {
    let header = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?;
    if header.iter().ne(want.iter().copied()) {
        return Err(Error::format(path, format!("expected columns {want:?}")));
    }
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<SolverTrace> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    check_header(path, &mut reader, &TRACE_COLUMNS)?;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        let c = TRACE_COLUMNS;
        records.push(TraceRecord {
            iteration: parse_field(path, &row[0], c[0])?,
            objective: parse_field(path, &row[1], c[1])?,
            mu_xi: parse_field(path, &row[2], c[2])?,
            mu_gamma: parse_field(path, &row[3], c[3])?,
            delta: parse_opt(path, &row[4], c[4])?,
            delta_f: parse_opt(path, &row[5], c[5])?,
            elapsed_seconds: parse_opt(path, &row[6], c[6])?,
        });
    }
    Ok(SolverTrace { records })
}

pub const GRID_COLUMNS: [&str; 5] = ["p", "rho", "trials", "successes", "probability"];

pub fn write_grid_csv(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(GRID_COLUMNS).map_err(err)?;
    for c in cells {
        w.write_record([
            c.p.to_string(),
            fmt_f64(c.rho),
            c.trials.to_string(),
            c.successes.to_string(),
            fmt_f64(c.probability),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_grid_csv(path: &Path) -> Result<Vec<CellResult>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    check_header(path, &mut reader, &GRID_COLUMNS)?;
    let mut cells = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        let c = GRID_COLUMNS;
        cells.push(CellResult {
            p: parse_field(path, &row[0], c[0])?,
            rho: parse_field(path, &row[1], c[1])?,
            trials: parse_field(path, &row[2], c[2])?,
            successes: parse_field(path, &row[3], c[3])?,
            probability: parse_field(path, &row[4], c[4])?,
        });
    }
    Ok(cells)
}

pub const TRIAL_COLUMNS: [&str; 7] = [
    "p",
    "rho",
    "trial",
    "error_db",
    "iterations",
    "stop_reason",
    "success",
];

/// One line per phase-grid trial; diverged trials have an empty error.
pub fn write_trials_csv(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(TRIAL_COLUMNS).map_err(err)?;
    for t in trials {
        w.write_record([
            t.p.to_string(),
            fmt_f64(t.rho),
            t.trial.to_string(),
            opt(t.error.map(to_db)),
            t.iterations.to_string(),
            t.stop_reason.map_or("diverged", |s| s.as_str()).to_string(),
            t.success.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
