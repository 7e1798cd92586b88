//! Regime-guided test-time adaptation for streaming time-series forecasting.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: datasets, sliding windows and MinMax scaling.
//! - [`similarity`]: the 5-D regime fingerprint and the four-metric
//!   similarity ensemble.
//! - [`forecast`]: DLinear and a small two-layer GRU with analytic gradients,
//!   SmoothL1 loss and Adam.
//! - [`memory`]: the FIFO regime checkpoint library and its dual gate.
//! - [`policies`]: TTA, EWC, DynaTTA and their regime-guided variants.
//! - [`datagen`]: seeded synthetic regime scenarios and the CSV loader.
//! - [`harness`]: the streaming evaluation protocol and metrics.
//! - [`stats`]: Wilcoxon, Friedman and Nemenyi, plus convergence checks.

pub mod data;
pub mod datagen;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod memory;
pub mod policies;
pub mod seeding;
pub mod similarity;
pub mod stats;

pub use error::{Error, Result};
