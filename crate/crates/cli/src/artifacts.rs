//! Intermediate CSV files passed between stages.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Deserialize;
use sentrisk::Split;

use crate::error::{bad_artifact, CliError, CliResult};

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

/// Opens an upstream artifact, naming the missing file in the error.
pub fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e} (has the earlier stage run?)", path.display())).into()
    })
}

fn parse_split(path: &Path, s: &str) -> CliResult<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(bad_artifact(path, format!("unknown split `{other}`"))),
    }
}

/// One row of the stage-1 posterior summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub row_id: u64,
    pub split: Split,
    pub y: f64,
    pub f_bar: f64,
    pub s_bar: f64,
}

#[derive(Deserialize)]
struct RawSummary {
    row_id: u64,
    split: String,
    y: f64,
    f_bar: f64,
    s_bar: f64,
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> CliResult<()> {
    let mut out = csv::Writer::from_writer(create(path)?);
    out.write_record(["row_id", "split", "y", "f_bar", "s_bar"])?;
    for r in rows {
        out.write_record([
            r.row_id.to_string(),
            r.split.to_string(),
            r.y.to_string(),
            r.f_bar.to_string(),
            r.s_bar.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> CliResult<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<RawSummary>() {
        let r = rec.map_err(|e| bad_artifact(path, e))?;
        rows.push(SummaryRow {
            row_id: r.row_id,
            split: parse_split(path, &r.split)?,
            y: r.y,
            f_bar: r.f_bar,
            s_bar: r.s_bar,
        });
    }
    if rows.is_empty() {
        return Err(bad_artifact(path, "no rows"));
    }
    Ok(rows)
}

/// Row label as consumed by stage two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlagRow {
    pub row_id: u64,
    pub split: Split,
    pub label: bool,
}

#[derive(Deserialize)]
struct RawFlag {
    row_id: u64,
    split: String,
    label: String,
}

/// Reads any CSV with `row_id`, `split` and 0/1 `label` columns.
pub fn read_flags_csv(path: &Path) -> CliResult<Vec<FlagRow>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<RawFlag>() {
        let r = rec.map_err(|e| bad_artifact(path, e))?;
        let label = match r.label.trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(bad_artifact(path, format!("label `{other}` is not 0/1"))),
        };
        rows.push(FlagRow {
            row_id: r.row_id,
            split: parse_split(path, &r.split)?,
            label,
        });
    }
    if rows.is_empty() {
        return Err(bad_artifact(path, "no rows"));
    }
    Ok(rows)
}

pub fn write_trace_csv(path: &Path, trace: &[f64]) -> CliResult<()> {
    let mut out = create(path)?;
    writeln!(out, "draw,value")?;
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{},{v}", i + 1)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> CliResult<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v = rec
            .get(1)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| bad_artifact(path, format!("bad trace line {:?}", rec.position().map(|p| p.line()))))?;
        out.push(v);
    }
    Ok(out)
}

pub fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::from(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found (has the earlier stage run?)", path.display()),
        )))
    }
}
