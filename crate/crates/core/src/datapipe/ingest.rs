//! Canonical long-form grid CSV (`time_index,row,col,traffic_mb`) plus a
//! TOML metadata sidecar, and an adapter for the Telecom Italia grid export.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::series::{GridFrame, TrafficSeries};
use crate::error::{MtsrError, Result};

pub const CSV_HEADER: [&str; 4] = ["time_index", "row", "col", "traffic_mb"];

/// Grid metadata stored next to the CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMeta {
    pub rows: usize,
    pub cols: usize,
    pub interval_minutes: u32,
    /// Frame count; when absent it is inferred from the largest time index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
}

impl GridMeta {
    /// Metadata of the Milan grid: 100x100 cells, 10-minute interval, 8,928 snapshots.
    pub fn milan() -> Self {
        GridMeta {
            rows: 100,
            cols: 100,
            interval_minutes: 10,
            frames: Some(8928),
        }
    }

    pub fn of(series: &TrafficSeries) -> Self {
        GridMeta {
            rows: series.rows(),
            cols: series.cols(),
            interval_minutes: series.interval_minutes(),
            frames: Some(series.len()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MtsrError::io(path, e))?;
        toml::from_str(&text).map_err(|e| MtsrError::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count() as u64),
            message: e.message().to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| MtsrError::Config(e.to_string()))?;
        fs::write(path, text).map_err(|e| MtsrError::io(path, e))
    }
}

/// Sidecar path for a grid CSV: `traffic.csv` -> `traffic.meta.toml`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.toml")
}

/// Decimal rendering with 17 significant digits, which round-trips any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> MtsrError {
    MtsrError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a canonical grid CSV into a dense series. Absent `(time, cell)`
/// entries are zero traffic.
pub fn ingest(path: &Path, meta: &GridMeta) -> Result<TrafficSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    let header = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(parse_err(
            path,
            1,
            format!(
                "expected header {}, found {}",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut max_t = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(parse_err(
                path,
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let int = |i: usize, name: &str| -> Result<usize> {
            record[i].parse::<usize>().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("{name} '{}' is not a non-negative integer", &record[i]),
                )
            })
        };
        let t = int(0, "time_index")?;
        let r = int(1, "row")?;
        let c = int(2, "col")?;
        let v: f64 = record[3]
            .parse()
            .map_err(|_| parse_err(path, line, format!("traffic_mb '{}' is not numeric", &record[3])))?;
        if !v.is_finite() || v < 0.0 {
            return Err(parse_err(
                path,
                line,
                format!("traffic_mb {v} must be finite and non-negative"),
            ));
        }
        if r >= meta.rows || c >= meta.cols {
            return Err(parse_err(
                path,
                line,
                format!("cell ({r}, {c}) outside the declared {}x{} grid", meta.rows, meta.cols),
            ));
        }
        if let Some(frames) = meta.frames {
            if t >= frames {
                return Err(parse_err(
                    path,
                    line,
                    format!("time index {t} beyond declared {frames} frames"),
                ));
            }
        }
        if !seen.insert((t, r * meta.cols + c)) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate entry for time {t}, cell ({r}, {c})"),
            ));
        }
        max_t = Some(max_t.map_or(t, |m: usize| m.max(t)));
        entries.push((t, r * meta.cols + c, v));
    }
    let frames = meta.frames.unwrap_or_else(|| max_t.map_or(0, |m| m + 1));
    if frames == 0 {
        return Err(MtsrError::Empty("grid CSV"));
    }
    let mut dense: Vec<GridFrame> = (0..frames)
        .map(|t| GridFrame::zeros(meta.rows, meta.cols).with_time(t))
        .collect();
    for (t, i, v) in entries {
        dense[t].values_mut()[i] = v;
    }
    TrafficSeries::new(meta.rows, meta.cols, meta.interval_minutes, dense)
}

/// Writes every cell of every frame (zeros included) in the canonical schema.
pub fn write_grid_csv(path: &Path, series: &TrafficSeries) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| MtsrError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| MtsrError::io(path, e);
    writeln!(out, "{}", CSV_HEADER.join(",")).map_err(io)?;
    for f in series.frames() {
        for r in 0..f.rows() {
            for c in 0..f.cols() {
                writeln!(out, "{},{},{},{}", f.time_index, r, c, fmt_f64(f.get(r, c))).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

/// Reads the Telecom Italia grid export: tab-separated
/// `square_id, time_ms, country_code, sms_in, sms_out, call_in, call_out, internet`
/// with 1-based square ids numbered row-major. All activity columns of a
/// (square, interval) are summed into one traffic value; missing fields count as zero.
pub fn ingest_telecom_italia(path: &Path, meta: &GridMeta) -> Result<TrafficSeries> {
    let text = fs::read_to_string(path).map_err(|e| MtsrError::io(path, e))?;
    let interval_ms = meta.interval_minutes as u64 * 60_000;
    let mut rows: Vec<(u64, usize, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(parse_err(path, line_no, "expected at least square id and timestamp"));
        }
        let square: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("square id '{}' is not an integer", fields[0])))?;
        if square == 0 || square > meta.rows * meta.cols {
            return Err(parse_err(path, line_no, format!("square id {square} outside grid")));
        }
        let ts: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("timestamp '{}' is not an integer", fields[1])))?;
        let mut total = 0.0;
        for f in fields.iter().skip(3) {
            let f = f.trim();
            if f.is_empty() {
                continue;
            }
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("activity '{f}' is not numeric")))?;
            total += v;
        }
        rows.push((ts, square - 1, total));
    }
    let t0 = rows
        .iter()
        .map(|r| r.0)
        .min()
        .ok_or(MtsrError::Empty("Telecom Italia export"))?;
    let frames = meta.frames.unwrap_or_else(|| {
        rows.iter()
            .map(|r| ((r.0 - t0) / interval_ms) as usize)
            .max()
            .unwrap_or(0)
            + 1
    });
    let mut dense: Vec<GridFrame> = (0..frames)
        .map(|t| GridFrame::zeros(meta.rows, meta.cols).with_time(t))
        .collect();
    for (ts, cell, v) in rows {
        let t = ((ts - t0) / interval_ms) as usize;
        if t < frames {
            dense[t].values_mut()[cell] += v;
        }
    }
    TrafficSeries::new(meta.rows, meta.cols, meta.interval_minutes, dense)
}
