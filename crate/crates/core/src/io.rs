//! Flat-file persistence: single-column value CSVs, TPDF CSVs, interval
//! CSVs, and JSON documents. Floats are serialized with 17 significant
//! digits so every numeric output round-trips exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::{ScaleTag, Series};
use crate::tail::Tpdf;
use crate::uncertainty::{IntervalRow, IntervalSet};

/// 17 significant digits: exact f64 round-trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_series_csv(path: &Path, series: &Series) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "value")?;
    for &v in &series.values {
        writeln!(w, "{}", fmt_f64(v))?;
    }
    Ok(())
}

pub fn read_series_csv(path: &Path, scale: ScaleTag) -> Result<Series> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| Error::Argument(format!("{}: no 'value' column", path.display())))?;
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let field = record
            .get(col)
            .ok_or_else(|| Error::Argument(format!("{}: short record", path.display())))?;
        let v: f64 = field
            .parse()
            .map_err(|e| Error::Argument(format!("{}: bad value {field:?}: {e}", path.display())))?;
        values.push(v);
    }
    Series::new(values, scale)
}

pub fn write_tpdf_csv(path: &Path, tpdf: &Tpdf) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "lag,sigma,n_pairs")?;
    for (h, &s) in tpdf.sigma.iter().enumerate() {
        let n_pairs = tpdf.n_pairs_used.get(h).copied().unwrap_or(0);
        writeln!(w, "{h},{},{n_pairs}", fmt_f64(s))?;
    }
    Ok(())
}

pub fn read_tpdf_csv(path: &Path) -> Result<Tpdf> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut sigma = Vec::new();
    let mut n_pairs = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let s: f64 = record
            .get(1)
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::Argument(format!("{}: bad sigma field", path.display())))?;
        sigma.push(s);
        n_pairs.push(record.get(2).and_then(|f| f.parse().ok()).unwrap_or(0));
    }
    if sigma.is_empty() {
        return Err(Error::Argument(format!("{}: empty TPDF", path.display())));
    }
    Ok(Tpdf { sigma, radial_quantile: None, n_pairs_used: n_pairs })
}

pub fn write_intervals_csv(path: &Path, intervals: &IntervalSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x_hat,lower,upper,actual")?;
    for row in &intervals.rows {
        let actual = row.actual.map(fmt_f64).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{actual}",
            fmt_f64(row.x_hat),
            fmt_f64(row.lower),
            fmt_f64(row.upper)
        )?;
    }
    Ok(())
}

pub fn read_intervals_csv(path: &Path) -> Result<IntervalSet> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = IntervalSet::default();
    for record in rdr.records() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::Argument(format!("{}: bad field {i}", path.display())))
        };
        let actual = match record.get(3) {
            Some("") | None => None,
            Some(f) => Some(f.parse().map_err(|e| {
                Error::Argument(format!("{}: bad actual {f:?}: {e}", path.display()))
            })?),
        };
        out.push(IntervalRow { x_hat: parse(0)?, lower: parse(1)?, upper: parse(2)?, actual })?;
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}
