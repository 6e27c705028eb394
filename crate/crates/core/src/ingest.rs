//! Reading SPC-style tornado files and turning them into a loss sample with
//! losses per unit area and the mean track position as covariates.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dists::{CovariateSample, LossSample};
use crate::{Error, Result};

pub const REQUIRED_COLUMNS: [&str; 8] = ["yr", "loss", "slat", "slon", "elat", "elon", "len", "wid"];

const LAT_RANGE: (f64, f64) = (15.0, 75.0);
const LON_RANGE: (f64, f64) = (-180.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TornadoRecord {
    #[serde(rename = "om")]
    pub raw_id: String,
    #[serde(rename = "yr")]
    pub year: i32,
    pub loss: f64,
    pub slat: f64,
    pub slon: f64,
    pub elat: f64,
    pub elon: f64,
    /// Track length in miles.
    pub len: f64,
    /// Track width in yards.
    pub wid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    /// 1-based line number in the file, header included.
    pub line: u64,
    pub raw: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedFile {
    pub records: Vec<TornadoRecord>,
    pub rejects: Vec<Reject>,
}

pub fn parse_tornado_csv(path: impl AsRef<Path>) -> Result<ParsedFile> {
    parse_tornado_reader(File::open(path)?)
}

/// Parses a comma-separated file with a header row. Rows that cannot be read
/// are returned as rejects with a reason.
pub fn parse_tornado_reader<R: Read>(input: R) -> Result<ParsedFile> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let mut cols = [0usize; 8];
    for (slot, name) in cols.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = *index.get(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let id_col = index.get("om").copied();

    let mut out = ParsedFile::default();
    for (k, row) in reader.records().enumerate() {
        let line = k as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(Reject {
                    line,
                    raw: String::new(),
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let line = row.position().map_or(line, |p| p.line());
        match parse_row(&row, &cols, id_col, line) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.rejects.push(Reject {
                line,
                raw: row.iter().collect::<Vec<_>>().join(","),
                reason,
            }),
        }
    }
    Ok(out)
}

fn parse_row(
    row: &csv::StringRecord,
    cols: &[usize; 8],
    id_col: Option<usize>,
    line: u64,
) -> Result<TornadoRecord, String> {
    let field = |k: usize| -> Result<&str, String> {
        match row.get(cols[k]) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(format!("missing {}", REQUIRED_COLUMNS[k])),
        }
    };
    let number = |k: usize| -> Result<f64, String> {
        let raw = field(k)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("invalid {}: {raw:?}", REQUIRED_COLUMNS[k])),
        }
    };
    let year_raw = field(0)?;
    let year: i32 = year_raw.parse().map_err(|_| format!("invalid yr: {year_raw:?}"))?;
    let loss = number(1)?;
    let slat = number(2)?;
    let slon = number(3)?;
    let mut elat = number(4)?;
    let mut elon = number(5)?;
    let len = number(6)?;
    let wid = number(7)?;
    if loss < 0.0 {
        return Err(format!("negative loss {loss}"));
    }
    if len < 0.0 || wid < 0.0 {
        return Err(format!("negative track size len={len} wid={wid}"));
    }
    // a zero end point means the end of the track was not recorded
    if elat == 0.0 && elon == 0.0 {
        elat = slat;
        elon = slon;
    }
    for (name, v) in [("slat", slat), ("elat", elat)] {
        if !(LAT_RANGE.0..=LAT_RANGE.1).contains(&v) {
            return Err(format!("{name} {v} out of range"));
        }
    }
    for (name, v) in [("slon", slon), ("elon", elon)] {
        if !(LON_RANGE.0..=LON_RANGE.1).contains(&v) {
            return Err(format!("{name} {v} out of range"));
        }
    }
    let raw_id = id_col
        .and_then(|c| row.get(c))
        .filter(|v| !v.is_empty())
        .map_or_else(|| format!("line{line}"), str::to_string);
    Ok(TornadoRecord {
        raw_id,
        year,
        loss,
        slat,
        slon,
        elat,
        elon,
        len,
        wid,
    })
}

/// Writes records in the column layout [`parse_tornado_reader`] reads.
pub fn write_records<W: Write>(out: W, records: &[TornadoRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for r in records {
        writer.serialize(r)?;
    }
    if records.is_empty() {
        writer.write_record(["om", "yr", "loss", "slat", "slon", "elat", "elon", "len", "wid"])?;
    }
    writer.flush()?;
    Ok(())
}

/// How many rows each filter of [`build_sample`] removed, in order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterCounts {
    pub outside_years: usize,
    pub non_positive_loss: usize,
    pub zero_area: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltSample {
    pub sample: LossSample,
    pub years: Vec<i32>,
    pub removed: FilterCounts,
}

/// Keeps rows with `year_min <= year <= year_max`, `loss > 0` and
/// `len * wid > 0`; `y = loss / (len * wid)`, `w = (mean lat, mean lon)`.
pub fn build_sample(records: &[TornadoRecord], year_min: i32, year_max: i32) -> Result<BuiltSample> {
    if year_min > year_max {
        return Err(Error::InvalidArgument(format!(
            "year range {year_min}..{year_max} is empty"
        )));
    }
    let mut removed = FilterCounts::default();
    let mut losses = Vec::new();
    let mut covs = Vec::new();
    let mut years = Vec::new();
    for r in records {
        if r.year < year_min || r.year > year_max {
            removed.outside_years += 1;
            continue;
        }
        if !(r.loss > 0.0) {
            removed.non_positive_loss += 1;
            continue;
        }
        let area = r.len * r.wid;
        if !(area > 0.0) {
            removed.zero_area += 1;
            continue;
        }
        losses.push(r.loss / area);
        covs.push(0.5 * (r.slat + r.elat));
        covs.push(0.5 * (r.slon + r.elon));
        years.push(r.year);
    }
    if losses.is_empty() {
        return Err(Error::Data(format!(
            "no tornado rows left after filtering to {year_min}..{year_max} (removed {removed:?})"
        )));
    }
    Ok(BuiltSample {
        sample: LossSample::new(losses, CovariateSample::new(2, covs)?)?,
        years,
        removed,
    })
}

/// Divides every loss by `unit`.
pub fn scale_losses(sample: &LossSample, unit: f64) -> Result<LossSample> {
    if !(unit > 0.0) || !unit.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "loss unit {unit} must be positive and finite"
        )));
    }
    sample.with_losses(sample.losses().iter().map(|y| y / unit).collect())
}

/// Writes `(y, w1, .., year)`; `years` may be empty.
pub fn write_sample_csv<W: Write>(out: W, sample: &LossSample, years: &[i32]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["y".to_string()];
    header.extend((1..=sample.dim()).map(|k| format!("w{k}")));
    if !years.is_empty() {
        header.push("year".into());
    }
    writer.write_record(&header)?;
    for (i, (y, w)) in sample.iter().enumerate() {
        let mut rec = vec![y.to_string()];
        rec.extend(w.iter().map(f64::to_string));
        if let Some(yr) = years.get(i) {
            rec.push(yr.to_string());
        }
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a sample written by [`write_sample_csv`]; lines starting with `#`
/// are skipped.
pub fn read_sample_csv<R: Read>(input: R) -> Result<LossSample> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let headers = reader.headers()?.clone();
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::MissingColumn("y".into()))?;
    let w_cols: Vec<usize> = (1..)
        .map_while(|k| headers.iter().position(|h| h == format!("w{k}")))
        .collect();
    if w_cols.is_empty() {
        return Err(Error::MissingColumn("w1".into()));
    }
    let mut losses = Vec::new();
    let mut covs = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row = row?;
        let num = |c: usize| -> Result<f64> {
            let raw = row.get(c).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| Error::Data(format!("row {}: cannot parse {raw:?}", k + 1)))
        };
        losses.push(num(y_col)?);
        for &c in &w_cols {
            covs.push(num(c)?);
        }
    }
    LossSample::new(losses, CovariateSample::new(w_cols.len(), covs)?)
}

pub fn write_rejects<W: Write>(out: W, rejects: &[Reject]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["line", "raw", "reason"])?;
    for r in rejects {
        writer.write_record([r.line.to_string(), r.raw.clone(), r.reason.clone()])?;
    }
    writer.flush()?;
    Ok(())
}
