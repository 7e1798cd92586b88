//! ETT-style CSV files: a header row, a timestamp first column (ignored
//! except for row order) and numeric value columns. One target column is
//! loaded.

use std::path::Path;

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Default target column of the ETT family.
pub const DEFAULT_TARGET: &str = "OT";

/// Seasonal period and sampling frequency of a known dataset family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetInfo {
    pub season_length: usize,
    pub frequency: &'static str,
}

/// Look up the dataset family from a dataset or file name.
pub fn season_for_name(name: &str) -> Option<DatasetInfo> {
    let n = name.to_ascii_lowercase();
    let info = |season_length, frequency| Some(DatasetInfo { season_length, frequency });
    if n.starts_with("etth") {
        info(24, "hourly")
    } else if n.starts_with("ettm") {
        info(96, "15min")
    } else if n.starts_with("weather") {
        info(144, "10min")
    } else if n.starts_with("exchange") {
        info(5, "daily")
    } else if n.starts_with("synth") {
        info(super::SYNTH_SEASON, "synthetic")
    } else {
        None
    }
}

fn csv_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Load one column of `path`. The target defaults to `OT` when present and
/// to the last column otherwise. The season length comes from the file name
/// unless `season_override` is given.
pub fn load_csv(path: impl AsRef<Path>, target: Option<&str>, season_override: Option<usize>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| csv_error(path, "file name is not valid UTF-8"))?
        .to_string();
    let info = season_for_name(&name);
    let season_length = match (season_override, info) {
        (Some(s), _) => s,
        (None, Some(i)) => i.season_length,
        (None, None) => {
            return Err(csv_error(
                path,
                format!("unknown dataset family '{name}'; a season length must be given"),
            ))
        }
    };
    let frequency = info.map_or("unknown", |i| i.frequency);

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e.to_string()))?.clone();
    if headers.len() < 2 {
        return Err(csv_error(path, "expected a timestamp column and at least one value column"));
    }
    let column = match target {
        Some(t) => headers
            .iter()
            .position(|h| h == t)
            .ok_or_else(|| csv_error(path, format!("target column '{t}' not found")))?,
        None => headers.iter().position(|h| h == DEFAULT_TARGET).unwrap_or(headers.len() - 1),
    };
    if column == 0 {
        return Err(csv_error(path, "the first column is the timestamp and cannot be the target"));
    }
    let column_name = headers[column].to_string();

    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, format!("row {row}: {e}")))?;
        let cell = record
            .get(column)
            .ok_or_else(|| csv_error(path, format!("row {row} has no column '{column_name}'")))?;
        let v: f64 = cell.parse().map_err(|_| {
            csv_error(path, format!("row {row}, column '{column_name}': '{cell}' is not a number"))
        })?;
        if !v.is_finite() {
            return Err(csv_error(path, format!("row {row}, column '{column_name}': non-finite value '{cell}'")));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(csv_error(path, "no data rows"));
    }
    TimeSeriesDataset::new(name, values, frequency, season_length)
}

/// Write `dataset` as `date,OT` with the row index as the timestamp.
pub fn write_csv(dataset: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e.to_string()))?;
    writer
        .write_record(["date", DEFAULT_TARGET])
        .map_err(|e| csv_error(path, e.to_string()))?;
    for (i, v) in dataset.values.iter().enumerate() {
        writer
            .write_record([i.to_string(), v.to_string()])
            .map_err(|e| csv_error(path, e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
