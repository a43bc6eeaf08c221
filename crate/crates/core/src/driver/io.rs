//! Time-series CSV and `.pfield` snapshot files.
//!
//! Snapshot layout: a 64-byte ASCII header `PFIELD v1 nx ny lx ly time`
//! padded with spaces and terminated by `\n` in the last byte, then
//! `nx·ny` little-endian `f64` values in row-major `[i, j]` order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::spectral::{make_grid, RealField};

pub const SERIES_HEADER: &str = "step,time,E_modified,F_original,mass,xi0,dissipation,solver_iters,q_consistency";

pub const SNAPSHOT_HEADER_LEN: usize = 64;
const SNAPSHOT_MAGIC: &str = "PFIELD v1";

/// One logged step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSeriesRow {
    pub step: usize,
    pub time: f64,
    /// Quadratic energy minus the model's constant offset, so that it equals
    /// `F_original` whenever `q = h(φ)`.
    pub e_modified: f64,
    pub f_original: f64,
    pub mass: f64,
    pub xi0: f64,
    pub dissipation: f64,
    pub solver_iters: usize,
    pub q_consistency: f64,
}

impl TimeSeriesRow {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.step,
            self.time,
            self.e_modified,
            self.f_original,
            self.mass,
            self.xi0,
            self.dissipation,
            self.solver_iters,
            self.q_consistency
        )
    }

    fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 9 {
            return None;
        }
        let r = |i: usize| f[i].parse::<f64>().ok();
        Some(Self {
            step: f[0].parse().ok()?,
            time: r(1)?,
            e_modified: r(2)?,
            f_original: r(3)?,
            mass: r(4)?,
            xi0: r(5)?,
            dissipation: r(6)?,
            solver_iters: f[7].parse().ok()?,
            q_consistency: r(8)?,
        })
    }
}

/// Writes rows under the fixed header. Floats use the shortest
/// representation that parses back to the same bits.
pub fn write_timeseries(rows: &[TimeSeriesRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{SERIES_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.to_csv())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeSeriesRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let bad = |reason: String| Error::Config(format!("{}: {reason}", path.display()));
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != SERIES_HEADER {
        return Err(bad("missing or wrong header".into()));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(TimeSeriesRow::from_csv(&line).ok_or_else(|| bad(format!("bad row {}", n + 2)))?);
    }
    Ok(rows)
}

/// Contents of a `.pfield` file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub time: f64,
    pub values: Array2<f64>,
}

impl Snapshot {
    pub fn into_field(self) -> Result<RealField> {
        let grid = make_grid(self.nx, self.ny, self.lx, self.ly)?;
        RealField::new(grid, self.values)
    }
}

/// `x` rounded to `digits` significant digits, printed in shortest form.
fn round_sig(x: f64, digits: usize) -> String {
    let rounded: f64 = format!("{:.*e}", digits - 1, x).parse().unwrap_or(x);
    rounded.to_string()
}

/// Header line for a snapshot. Reals are written exactly when the line fits
/// in 64 bytes, otherwise with as many significant digits as fit.
pub fn snapshot_header(nx: usize, ny: usize, lx: f64, ly: f64, time: f64) -> Result<[u8; SNAPSHOT_HEADER_LEN]> {
    let exact = format!("{SNAPSHOT_MAGIC} {nx} {ny} {lx} {ly} {time}");
    let text = if exact.len() < SNAPSHOT_HEADER_LEN {
        exact
    } else {
        (1..=17)
            .rev()
            .map(|d| {
                format!(
                    "{SNAPSHOT_MAGIC} {nx} {ny} {} {} {}",
                    round_sig(lx, d),
                    round_sig(ly, d),
                    round_sig(time, d)
                )
            })
            .find(|t| t.len() < SNAPSHOT_HEADER_LEN)
            .ok_or_else(|| Error::Config(format!("snapshot header too long: {exact}")))?
    };
    let mut buf = [b' '; SNAPSHOT_HEADER_LEN];
    buf[..text.len()].copy_from_slice(text.as_bytes());
    buf[SNAPSHOT_HEADER_LEN - 1] = b'\n';
    Ok(buf)
}

pub fn write_snapshot(field: &RealField, time: f64, path: &Path) -> Result<()> {
    let g = field.grid();
    let header = snapshot_header(g.nx(), g.ny(), g.lx(), g.ly(), time)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header)?;
    for v in field.values().iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn parse_header(bytes: &[u8]) -> std::result::Result<(usize, usize, f64, f64, f64), String> {
    if bytes.len() != SNAPSHOT_HEADER_LEN || bytes[SNAPSHOT_HEADER_LEN - 1] != b'\n' {
        return Err("header is not a 64-byte line".into());
    }
    let text = std::str::from_utf8(bytes).map_err(|_| "header is not ASCII".to_string())?;
    let rest = text
        .trim_end()
        .strip_prefix(SNAPSHOT_MAGIC)
        .ok_or_else(|| "missing PFIELD v1 tag".to_string())?;
    let f: Vec<&str> = rest.split_whitespace().collect();
    if f.len() != 5 {
        return Err(format!("expected 5 header fields, found {}", f.len()));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|e| format!("bad size {s:?}: {e}"));
    let real = |s: &str| s.parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"));
    Ok((int(f[0])?, int(f[1])?, real(f[2])?, real(f[3])?, real(f[4])?))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let malformed = |reason: String| Error::MalformedSnapshot {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; SNAPSHOT_HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| malformed("file shorter than header".into()))?;
    let (nx, ny, lx, ly, time) = parse_header(&header).map_err(malformed)?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() != nx * ny * 8 {
        return Err(malformed(format!(
            "expected {} data bytes, found {}",
            nx * ny * 8,
            data.len()
        )));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let values = Array2::from_shape_vec((nx, ny), values).map_err(|e| malformed(e.to_string()))?;
    Ok(Snapshot {
        nx,
        ny,
        lx,
        ly,
        time,
        values,
    })
}

/// `snap_t<time>.pfield` with trailing zeros trimmed: `snap_t0`, `snap_t12.5`.
pub fn snapshot_name(time: f64) -> String {
    let s = format!("{time:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("snap_t{s}.pfield")
}
