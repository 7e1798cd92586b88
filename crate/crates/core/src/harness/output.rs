//! Run logs (one JSON record per line) and summary CSV files.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{RunRecord, SummaryRow};
use crate::error::{Error, Result};

/// Append `records` to the run log at `path`, creating it if needed.
pub fn write_run_log(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_run_log(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn csv_error(path: &Path, e: impl ToString) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| csv_error(path, format!("row {}: {e}", i + 1))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{HarnessConfig, TimeSeriesDataset};
    use crate::forecast::{ModelSpec, TrainConfig};
    use crate::harness::{aggregate, run_stream};
    use crate::policies::PolicyConfig;

    #[test]
    fn log_and_summary_round_trip() {
        let values = (0..420).map(|i| (i as f64 / 4.0).sin() * 3.0 + 10.0).collect();
        let d = TimeSeriesDataset::new("toy", values, "hourly", 24).unwrap();
        let cfg = HarnessConfig {
            initial_train_size: 120,
            batch_size: 100,
            max_batches: 3,
            seq_len: 24,
            ..HarnessConfig::default()
        };
        let train = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let out = run_stream(&d, &ModelSpec::dlinear(), &PolicyConfig::default(), 12, 0, &cfg, &train).unwrap();
        assert_eq!(out.records.len(), 2);

        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("runs.jsonl");
        write_run_log(&log, &out.records[..1]).unwrap();
        write_run_log(&log, &out.records[1..]).unwrap();
        assert_eq!(read_run_log(&log).unwrap(), out.records);

        let rows = aggregate(&out.records).unwrap();
        let csv = dir.path().join("summary.csv");
        write_summary_csv(&csv, &rows).unwrap();
        assert_eq!(read_summary_csv(&csv).unwrap(), rows);
    }
}
