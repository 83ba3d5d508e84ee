//! CSV input and normalized CSV output for population time series.
//!
//! The header must name `year` and `count`; every other column is a
//! covariate. Line numbers in errors are 1-based and count the header.

use std::path::Path;

use permsel_core::TimeSeriesDataset;

use crate::error::{CliError, Result};

pub fn ingest_csv(path: &Path) -> Result<TimeSeriesDataset> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_csv(&bytes, path)
}

/// Parses CSV bytes; `path` is used only in error messages.
pub fn parse_csv(bytes: &[u8], path: &Path) -> Result<TimeSeriesDataset> {
    let parse_err = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, format!("missing required column `{name}`")))
    };
    let year_col = find("year")?;
    let count_col = find("count")?;
    let covariate_cols: Vec<usize> = (0..header.len()).filter(|&i| i != year_col && i != count_col).collect();
    for (i, h) in header.iter().enumerate() {
        if h.is_empty() {
            return Err(parse_err(1, format!("column {} has an empty name", i + 1)));
        }
        if header[..i].contains(h) {
            return Err(parse_err(1, format!("duplicate column `{h}`")));
        }
    }

    let mut years = Vec::new();
    let mut counts = Vec::new();
    let mut covariates: Vec<Vec<f64>> = vec![Vec::new(); covariate_cols.len()];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| -> Result<f64> {
            let raw = &record[col];
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("column `{}`: `{raw}` is not a finite number", header[col])))
        };
        let raw_year = &record[year_col];
        let year: i64 = raw_year
            .parse()
            .map_err(|_| parse_err(line, format!("column `year`: `{raw_year}` is not an integer")))?;
        if let Some(&previous) = years.last() {
            if year != previous + 1 {
                return Err(CliError::Gap {
                    path: path.to_path_buf(),
                    line,
                    year,
                    previous,
                });
            }
        }
        let count = field(count_col)?;
        if count <= 0.0 {
            return Err(CliError::NonPositiveCount {
                path: path.to_path_buf(),
                line,
                year,
                value: count,
            });
        }
        years.push(year);
        counts.push(count);
        for (series, &col) in covariates.iter_mut().zip(&covariate_cols) {
            series.push(field(col)?);
        }
    }
    if years.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    let named = covariate_cols
        .iter()
        .map(|&c| header[c].clone())
        .zip(covariates)
        .collect();
    TimeSeriesDataset::new(years, counts, named).map_err(|e| CliError::core(path.display().to_string(), e))
}

/// Writes `year,count,<covariates...>` with shortest round-trip number
/// formatting, so re-ingesting gives back the same values.
pub fn write_csv<W: std::io::Write>(dataset: &TimeSeriesDataset, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["year".to_string(), "count".to_string()];
    header.extend(dataset.covariates().iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (t, year) in dataset.years().iter().enumerate() {
        let mut row = vec![year.to_string(), dataset.counts()[t].to_string()];
        row.extend(dataset.covariates().iter().map(|(_, v)| v[t].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
