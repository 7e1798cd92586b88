//! Shared domain types: datasets, sliding windows, MinMax scaling and the
//! streaming protocol configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A univariate target series with its seasonal period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesDataset {
    pub name: String,
    pub values: Vec<f64>,
    pub frequency: String,
    pub season_length: usize,
}

impl TimeSeriesDataset {
    pub fn new(
        name: impl Into<String>,
        values: Vec<f64>,
        frequency: impl Into<String>,
        season_length: usize,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("dataset values"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dataset values",
                index,
            });
        }
        if season_length < 2 {
            return Err(Error::Config(format!(
                "season_length must be at least 2, got {season_length}"
            )));
        }
        Ok(Self {
            name: name.into(),
            values,
            frequency: frequency.into(),
            season_length,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One supervised example: `input` immediately precedes `target` in the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub origin_index: usize,
}

/// All windows of `series` with input length `seq_len` and target length
/// `horizon`, stepping the origin by `stride`. A series shorter than
/// `seq_len + horizon` yields no windows.
pub fn make_windows(series: &[f64], seq_len: usize, horizon: usize, stride: usize) -> Vec<WindowPair> {
    let span = seq_len + horizon;
    if series.len() < span || stride == 0 {
        return Vec::new();
    }
    (0..=series.len() - span)
        .step_by(stride)
        .map(|i| WindowPair {
            input: series[i..i + seq_len].to_vec(),
            target: series[i + seq_len..i + span].to_vec(),
            origin_index: i,
        })
        .collect()
}

/// MinMax scaler onto `[-1, 1]`.
///
/// A constant series (`data_max == data_min`) transforms to 0 everywhere and
/// inverts to `data_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub data_min: f64,
    pub data_max: f64,
    pub fitted: bool,
}

impl Default for ScalerState {
    fn default() -> Self {
        Self {
            data_min: 0.0,
            data_max: 0.0,
            fitted: false,
        }
    }
}

impl ScalerState {
    fn range(&self) -> f64 {
        self.data_max - self.data_min
    }

    fn degenerate(&self) -> bool {
        !(self.range() > 0.0)
    }

    pub fn transform(&self, x: f64) -> f64 {
        if self.degenerate() {
            0.0
        } else {
            2.0 * (x - self.data_min) / self.range() - 1.0
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        if self.degenerate() {
            self.data_min
        } else {
            (y + 1.0) * 0.5 * self.range() + self.data_min
        }
    }

    pub fn transform_slice(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.transform(x)).collect()
    }

    pub fn inverse_slice(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.inverse(y)).collect()
    }

    pub fn transform_window(&self, w: &WindowPair) -> WindowPair {
        WindowPair {
            input: self.transform_slice(&w.input),
            target: self.transform_slice(&w.target),
            origin_index: w.origin_index,
        }
    }
}

pub fn fit_scaler(values: &[f64]) -> Result<ScalerState> {
    if values.is_empty() {
        return Err(Error::EmptyInput("scaler fit"));
    }
    let mut data_min = f64::INFINITY;
    let mut data_max = f64::NEG_INFINITY;
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "scaler fit",
                index,
            });
        }
        data_min = data_min.min(v);
        data_max = data_max.max(v);
    }
    Ok(ScalerState {
        data_min,
        data_max,
        fitted: true,
    })
}

/// Sizes of the streaming protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub initial_train_size: usize,
    pub batch_size: usize,
    pub max_batches: usize,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    pub seq_len: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            initial_train_size: 720,
            batch_size: 750,
            max_batches: 10,
            horizons: vec![96],
            seeds: vec![0, 1, 2],
            seq_len: 96,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_train_size", self.initial_train_size),
            ("batch_size", self.batch_size),
            ("max_batches", self.max_batches),
            ("seq_len", self.seq_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::Config("horizons must be non-empty and positive".into()));
        }
        if self.seq_len >= self.batch_size {
            return Err(Error::Config(format!(
                "seq_len ({}) must be smaller than batch_size ({})",
                self.seq_len, self.batch_size
            )));
        }
        Ok(())
    }
}
