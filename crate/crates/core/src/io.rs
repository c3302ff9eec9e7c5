//! CSV readers and writers for traces, tables, wind series and analysis output.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::SchedulingTables;
use crate::freqdom::BodeTable;
use crate::sigproc::PsdResult;
use crate::simulate::{SimulationTrace, TraceRow, WindSeries};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>, IoError> {
    let f = File::create(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::Writer::from_writer(f))
}

fn reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    let f = File::open(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(f))
}

fn write_records<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), IoError> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, IoError> {
    reader(path)?
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(csv_err(path))
}

pub fn write_trace_csv(path: &Path, trace: &SimulationTrace) -> Result<(), IoError> {
    write_records(path, &trace.rows)
}

/// Read a trace written by [`write_trace_csv`]. The step is taken from the
/// first two rows and the divergence flag is not stored, so it reads back
/// as `false`.
pub fn read_trace_csv(path: &Path) -> Result<SimulationTrace, IoError> {
    let rows: Vec<TraceRow> = read_records(path)?;
    if rows.len() < 2 {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            msg: "trace needs at least two rows".into(),
        });
    }
    Ok(SimulationTrace {
        dt: rows[1].t - rows[0].t,
        rows,
        diverged: false,
        diverged_at: None,
    })
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    omega_r: f64,
    psi_star_rad: f64,
    gamma: f64,
}

pub fn write_tables_csv(path: &Path, tables: &SchedulingTables) -> Result<(), IoError> {
    write_records(
        path,
        (0..tables.omega_r.len()).map(|i| TableRow {
            omega_r: tables.omega_r[i],
            psi_star_rad: tables.psi_star[i],
            gamma: tables.gamma[i],
        }),
    )
}

/// Load scheduling tables; the speed-filter cutoff is not part of the file.
pub fn read_tables_csv(path: &Path, speed_cutoff: f64) -> Result<SchedulingTables, IoError> {
    let rows: Vec<TableRow> = read_records(path)?;
    SchedulingTables::new(
        rows.iter().map(|r| r.omega_r).collect(),
        rows.iter().map(|r| r.psi_star_rad).collect(),
        rows.iter().map(|r| r.gamma).collect(),
        speed_cutoff,
    )
    .map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

#[derive(Serialize, Deserialize)]
struct WindRow {
    time_s: f64,
    wind_mps: f64,
}

pub fn read_wind_csv(path: &Path) -> Result<WindSeries, IoError> {
    let rows: Vec<WindRow> = read_records(path)?;
    if rows.is_empty() {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            msg: "wind file has no samples".into(),
        });
    }
    Ok(WindSeries {
        path: path.to_path_buf(),
        time: rows.iter().map(|r| r.time_s).collect(),
        speed: rows.iter().map(|r| r.wind_mps).collect(),
    })
}

pub fn write_wind_csv(path: &Path, series: &WindSeries) -> Result<(), IoError> {
    write_records(
        path,
        series
            .time
            .iter()
            .zip(&series.speed)
            .map(|(&time_s, &wind_mps)| WindRow { time_s, wind_mps }),
    )
}

#[derive(Serialize, Deserialize)]
struct PsdRow {
    omega_rad_s: f64,
    density: f64,
}

pub fn write_psd_csv(path: &Path, psd: &PsdResult) -> Result<(), IoError> {
    write_records(
        path,
        psd.omega
            .iter()
            .zip(&psd.density)
            .map(|(&omega_rad_s, &density)| PsdRow {
                omega_rad_s,
                density,
            }),
    )
}

/// Returns `(omega, density)`.
pub fn read_psd_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), IoError> {
    let rows: Vec<PsdRow> = read_records(path)?;
    Ok(rows.into_iter().map(|r| (r.omega_rad_s, r.density)).unzip())
}

pub fn write_bode_csv(path: &Path, table: &BodeTable) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(table.header()).map_err(csv_err(path))?;
    for r in &table.rows {
        let mut rec = vec![r.omega.to_string()];
        for (m, p) in r.mag_db.iter().zip(&r.phase_deg) {
            rec.push(m.to_string());
            rec.push(p.to_string());
        }
        rec.push(u8::from(r.pole).to_string());
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One row of the RGA sweep; magnitudes are NaN where the RGA is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgaRow {
    pub omega_r: f64,
    pub lambda11_abs_no_offset: f64,
    pub lambda12_abs_no_offset: f64,
    pub lambda11_abs_offset: f64,
    pub lambda12_abs_offset: f64,
    pub undefined: u8,
}

pub fn write_rga_csv(path: &Path, rows: &[RgaRow]) -> Result<(), IoError> {
    write_records(path, rows)
}

pub fn read_rga_csv(path: &Path) -> Result<Vec<RgaRow>, IoError> {
    read_records(path)
}

/// Raw numeric columns of any CSV with a header row.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let mut r = reader(path)?;
    let header: Vec<String> = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::Format {
                path: path.to_path_buf(),
                msg: format!("row {}: {e}", i + 2),
            })?;
        rows.push(row);
    }
    Ok((header, rows))
}
