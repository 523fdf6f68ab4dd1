//! CSV ingestion and plot-data emission.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading a
//! written file back reproduces every value exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::embedding_space::PcaModel;
use crate::mdn::EmbeddingTable;
use crate::sweep::{SweepTrace, Waveform, WaveformSample};
use crate::trainer::{DataPoint, Dataset, EpochLog};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(Error::file(path))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(Error::file(path))
}

/// Shortest round-trip text; scientific notation outside `[1e-3, 1e7)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-3..1e7).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Column positions of `names` in the header; a missing column is a parse
/// error on line 1.
fn column_indices(headers: &csv::StringRecord, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|&name| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Parse { line: 1, message: format!("missing column `{name}`") })
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, col: usize, name: &str) -> Result<T> {
    let line = record.position().map_or(0, |p| p.line());
    let raw = record
        .get(col)
        .ok_or_else(|| Error::Parse { line, message: format!("missing value for `{name}`") })?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("cannot parse `{raw}` as {name}") })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

/// Reads `device_id,v_gate,i_drain` rows; device labels are mapped to dense
/// ids in ascending label order.
pub fn read_measurements<R: Read>(r: R) -> Result<Dataset> {
    let mut rdr = reader(r);
    let cols = column_indices(rdr.headers()?, &["device_id", "v_gate", "i_drain"])?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let label: i64 = parse_field(&record, cols[0], "device_id")?;
        let v: f64 = parse_field(&record, cols[1], "v_gate")?;
        let i: f64 = parse_field(&record, cols[2], "i_drain")?;
        if !v.is_finite() || !i.is_finite() {
            return Err(Error::Parse { line, message: "non-finite value".into() });
        }
        if i < 0.0 {
            return Err(Error::Parse { line, message: format!("negative drain current {i}") });
        }
        rows.push((label, v, i));
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData("measurement file has no rows".into()));
    }
    let labels: BTreeMap<i64, usize> = rows.iter().map(|r| (r.0, 0)).collect();
    let labels: BTreeMap<i64, usize> = labels.keys().enumerate().map(|(i, &l)| (l, i)).collect();
    let points = rows
        .iter()
        .map(|&(l, v, i)| DataPoint { device_id: labels[&l], v_gate: v, i_drain: i })
        .collect();
    let mut ds = Dataset::new(points, labels.len())?;
    ds.device_labels = labels.keys().copied().collect();
    Ok(ds)
}

pub fn load_measurements(path: &Path) -> Result<Dataset> {
    read_measurements(open(path)?)
}

/// Writes points with their original device labels.
pub fn write_measurements<W: Write>(w: W, dataset: &Dataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["device_id", "v_gate", "i_drain"])?;
    for p in &dataset.points {
        let label = dataset.device_labels.get(p.device_id).copied().unwrap_or(p.device_id as i64);
        wtr.write_record([label.to_string(), fmt_f64(p.v_gate), fmt_f64(p.i_drain)])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_measurements(path: &Path, dataset: &Dataset) -> Result<()> {
    write_measurements(create(path)?, dataset)
}

pub fn read_waveform<R: Read>(r: R) -> Result<Waveform> {
    let mut rdr = reader(r);
    let cols = column_indices(rdr.headers()?, &["time", "v_gate"])?;
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record?;
        samples.push(WaveformSample {
            time: parse_field(&record, cols[0], "time")?,
            v_gate: parse_field(&record, cols[1], "v_gate")?,
        });
    }
    Waveform::new(samples)
}

pub fn load_waveform(path: &Path) -> Result<Waveform> {
    read_waveform(open(path)?)
}

pub fn write_waveform<W: Write>(w: W, waveform: &Waveform) -> Result<()> {
    write_rows(
        w,
        &["time", "v_gate"],
        waveform.samples().iter().map(|s| vec![fmt_f64(s.time), fmt_f64(s.v_gate)]),
    )
}

fn write_rows<W: Write, I: IntoIterator<Item = Vec<String>>>(w: W, header: &[&str], rows: I) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(w: W, trace: &SweepTrace) -> Result<()> {
    write_rows(
        w,
        &["time", "v_gate", "i_drain", "q_used"],
        trace.points.iter().map(|p| {
            vec![fmt_f64(p.time), fmt_f64(p.v_gate), fmt_f64(p.i_drain), fmt_f64(p.q_used)]
        }),
    )
}

pub fn save_trace(path: &Path, trace: &SweepTrace) -> Result<()> {
    write_trace(create(path)?, trace)
}

pub fn read_trace<R: Read>(r: R) -> Result<SweepTrace> {
    let mut rdr = reader(r);
    let cols = column_indices(rdr.headers()?, &["time", "v_gate", "i_drain", "q_used"])?;
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record?;
        points.push(crate::sweep::TracePoint {
            time: parse_field(&record, cols[0], "time")?,
            v_gate: parse_field(&record, cols[1], "v_gate")?,
            i_drain: parse_field(&record, cols[2], "i_drain")?,
            q_used: parse_field(&record, cols[3], "q_used")?,
        });
    }
    Ok(SweepTrace { points })
}

/// Columns `v_gate` then one per named current series.
pub fn save_series(path: &Path, voltages: &[f64], series: &[(&str, Vec<f64>)]) -> Result<()> {
    let mut header = vec!["v_gate"];
    header.extend(series.iter().map(|(name, _)| *name));
    let rows = voltages.iter().enumerate().map(|(i, v)| {
        let mut row = vec![fmt_f64(*v)];
        row.extend(series.iter().map(|(_, s)| fmt_f64(s[i])));
        row
    });
    write_rows(create(path)?, &header, rows)
}

pub fn save_pdf(path: &Path, grid: &[f64], density: &[f64]) -> Result<()> {
    write_rows(
        create(path)?,
        &["x", "density"],
        grid.iter().zip(density).map(|(x, d)| vec![fmt_f64(*x), fmt_f64(*d)]),
    )
}

pub fn save_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    write_rows(
        create(path)?,
        &["epoch", "train_loss", "holdout_loss"],
        log.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                fmt_f64(e.train_loss),
                e.holdout_loss.map_or_else(String::new, fmt_f64),
            ]
        }),
    )
}

pub fn save_metrics(path: &Path, r2: f64, crps: f64) -> Result<()> {
    write_rows(create(path)?, &["r2", "crps"], [vec![fmt_f64(r2), fmt_f64(crps)]])
}

/// `device_id,pc1,pc2` for every table row.
pub fn save_pca_projection(path: &Path, labels: &[i64], table: &EmbeddingTable, pca: &PcaModel) -> Result<()> {
    let mut rows = Vec::with_capacity(table.rows());
    for (i, row) in table.iter_rows().enumerate() {
        let p = pca.project(row)?;
        let label = labels.get(i).copied().unwrap_or(i as i64);
        rows.push(vec![
            label.to_string(),
            fmt_f64(p.first().copied().unwrap_or(0.0)),
            fmt_f64(p.get(1).copied().unwrap_or(0.0)),
        ]);
    }
    write_rows(create(path)?, &["device_id", "pc1", "pc2"], rows)
}
