//! Streaming evaluation protocol.
//!
//! A run trains the model on the initial prefix, then walks the stream in
//! fixed-size batches. After adapting to batch `t` the learner issues one
//! `H`-step forecast from the last `L` rows of the batch, which is scored
//! against the next `H` rows on the original scale. Batches without `H`
//! ground-truth rows after them end the run. Batch boundaries, evaluation
//! targets and sample indices depend only on the dataset, the horizon and
//! the seed, so every policy sharing a seed faces the identical protocol.

mod aggregate;
mod metrics;
mod output;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{fit_scaler, make_windows, HarnessConfig, ScalerState, TimeSeriesDataset, WindowPair};
use crate::error::{Error, Result};
use crate::forecast::{train_full, Architecture, ModelSpec, ModelWeights, TrainConfig, TrainReport};
use crate::policies::{AdaptReport, BatchInput, Learner, LearnerContext, PolicyConfig, PolicyKind, SamplePlan};

pub use aggregate::{aggregate, seed_means, win_counts, ConfigKey, SeedMean, SummaryRow, WinTable};
pub use metrics::{compute_metrics, compute_metrics_with_decay, MetricSet, WMAPE_DECAY};
pub use output::{read_run_log, read_summary_csv, write_run_log, write_summary_csv};

/// One scored forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub policy: PolicyKind,
    pub model: Architecture,
    pub dataset: String,
    pub horizon: usize,
    pub seed: u64,
    /// 1-based batch index.
    pub batch: usize,
    pub batch_start: usize,
    pub batch_end: usize,
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
    pub wmape: f64,
    pub direction_accuracy: f64,
    pub adapt_time_seconds: f64,
    /// Hex digest of the batch boundaries, the evaluation target and the
    /// sample indices handed to the learner; equal across policies.
    pub protocol_digest: String,
    pub report: AdaptReport,
}

impl RunRecord {
    pub fn metrics(&self) -> MetricSet {
        MetricSet {
            mse: self.mse,
            mae: self.mae,
            rmse: self.rmse,
            smape: self.smape,
            wmape: self.wmape,
            direction_accuracy: self.direction_accuracy,
        }
    }
}

/// Half-open row range of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchBounds {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

/// Batches that have at least `horizon` rows after them.
pub fn batch_schedule(len: usize, config: &HarnessConfig, horizon: usize) -> Vec<BatchBounds> {
    (1..=config.max_batches)
        .map(|t| {
            let start = config.initial_train_size + (t - 1) * config.batch_size;
            BatchBounds {
                index: t,
                start,
                end: start + config.batch_size,
            }
        })
        .take_while(|b| b.end + horizon <= len)
        .collect()
}

/// Hex SHA-256 of a dataset's values.
pub fn dataset_digest(dataset: &TimeSeriesDataset) -> String {
    let mut h = Sha256::new();
    for v in &dataset.values {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of everything a batch hands to a learner that must not depend on
/// the policy: bounds, the forecast input and target, the evaluation and
/// Fisher samples and the first `steps` gradient minibatches.
pub fn protocol_digest(
    values: &[f64],
    bounds: BatchBounds,
    plan: &SamplePlan,
    steps: usize,
    minibatch: usize,
    seq_len: usize,
    horizon: usize,
) -> String {
    let mut h = Sha256::new();
    for x in [bounds.index, bounds.start, bounds.end] {
        h.update((x as u64).to_le_bytes());
    }
    for v in &values[bounds.end - seq_len..bounds.end + horizon] {
        h.update(v.to_le_bytes());
    }
    let mut indices = |idx: &[usize]| {
        h.update((idx.len() as u64).to_le_bytes());
        for &i in idx {
            h.update((i as u64).to_le_bytes());
        }
    };
    indices(&plan.eval);
    indices(&plan.fisher);
    for k in 0..steps {
        indices(&plan.minibatch(k, minibatch));
    }
    hex(&h.finalize())
}

/// A model trained on the initial prefix, shared by every policy of a
/// (model, dataset, horizon, seed) group.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub weights: ModelWeights,
    pub scaler: ScalerState,
    /// Scaled training windows (used to seed the EWC Fisher).
    pub windows: Vec<WindowPair>,
    pub report: TrainReport,
}

/// Train `model` on rows `[0, initial_train_size)`.
pub fn pretrain(
    dataset: &TimeSeriesDataset,
    model: &ModelSpec,
    config: &HarnessConfig,
    horizon: usize,
    seed: u64,
    train: &TrainConfig,
) -> Result<Pretrained> {
    config.validate()?;
    if dataset.len() < config.initial_train_size {
        return Err(Error::InsufficientData(format!(
            "dataset '{}' has {} rows, fewer than the initial training size {}",
            dataset.name,
            dataset.len(),
            config.initial_train_size
        )));
    }
    let prefix = &dataset.values[..config.initial_train_size];
    let scaler = fit_scaler(prefix)?;
    let windows: Vec<WindowPair> = make_windows(prefix, config.seq_len, horizon, 1)
        .iter()
        .map(|w| scaler.transform_window(w))
        .collect();
    if windows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "initial training prefix of {} rows holds no windows of {} + {}",
            config.initial_train_size, config.seq_len, horizon
        )));
    }
    let mut weights = ModelWeights::init(model, config.seq_len, horizon, seed)?;
    let report = train_full(&mut weights, &windows, train, seed)?;
    Ok(Pretrained {
        weights,
        scaler,
        windows,
        report,
    })
}

/// Records of one run, plus the abort reason when the policy failed part-way.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    pub error: Option<String>,
}

/// Pretrain and stream in one call.
pub fn run_stream(
    dataset: &TimeSeriesDataset,
    model: &ModelSpec,
    policy: &PolicyConfig,
    horizon: usize,
    seed: u64,
    config: &HarnessConfig,
    train: &TrainConfig,
) -> Result<RunOutcome> {
    let pre = pretrain(dataset, model, config, horizon, seed, train)?;
    run_stream_from(dataset, &pre, policy, horizon, seed, config, train)
}

/// Pretrain once and stream every policy from the same starting model.
pub fn run_group(
    dataset: &TimeSeriesDataset,
    model: &ModelSpec,
    policies: &[PolicyConfig],
    horizon: usize,
    seed: u64,
    config: &HarnessConfig,
    train: &TrainConfig,
) -> Result<Vec<RunOutcome>> {
    let pre = pretrain(dataset, model, config, horizon, seed, train)?;
    policies
        .iter()
        .map(|p| run_stream_from(dataset, &pre, p, horizon, seed, config, train))
        .collect()
}

/// Stream the batches of `dataset` through a learner started from `pre`.
/// Configuration errors are returned; an adaptation failure ends the run and
/// is reported in [`RunOutcome::error`] alongside the records so far.
pub fn run_stream_from(
    dataset: &TimeSeriesDataset,
    pre: &Pretrained,
    policy: &PolicyConfig,
    horizon: usize,
    seed: u64,
    config: &HarnessConfig,
    train: &TrainConfig,
) -> Result<RunOutcome> {
    config.validate()?;
    let shape = pre.weights.shape;
    if shape.horizon != horizon || shape.seq_len != config.seq_len {
        return Err(Error::Shape(format!(
            "pretrained model is L={} H={}, run asks for L={} H={horizon}",
            shape.seq_len, shape.horizon, config.seq_len
        )));
    }
    let ctx = LearnerContext {
        season_length: dataset.season_length,
        seed,
        train: train.clone(),
    };
    let mut learner = Learner::new(policy.clone(), pre.weights.clone(), pre.scaler, ctx)?;
    learner.init_fisher(&pre.windows)?;

    let values = &dataset.values;
    let digest_steps = policy.k_max.max(policy.tta_steps).max(policy.ewc_steps).max(policy.dynatta_steps);
    let mut records = Vec::new();
    for bounds in batch_schedule(values.len(), config, horizon) {
        let batch = BatchInput {
            index: bounds.index,
            values: &values[bounds.start..bounds.end],
            history: &values[..bounds.end],
        };
        let started = Instant::now();
        let report = match learner.adapt_batch(&batch) {
            Ok(r) => r,
            Err(e) => {
                let msg = format!(
                    "{} on {} (H={horizon}, seed {seed}) aborted at batch {}: {e}",
                    policy.kind, dataset.name, bounds.index
                );
                log::error!("{msg}");
                return Ok(RunOutcome {
                    records,
                    error: Some(msg),
                });
            }
        };
        let adapt_time_seconds = started.elapsed().as_secs_f64();

        let input = &values[bounds.end - config.seq_len..bounds.end];
        let truth = &values[bounds.end..bounds.end + horizon];
        let pred = learner.forecast(input)?;
        if let Some(i) = pred.iter().position(|p| !p.is_finite()) {
            let msg = format!("non-finite forecast at step {i} of batch {}", bounds.index);
            log::error!("{msg}");
            return Ok(RunOutcome {
                records,
                error: Some(msg),
            });
        }
        let m = compute_metrics(&pred, truth, values[bounds.end - 1]);

        let n_windows = make_windows(batch.values, config.seq_len, horizon, 1).len();
        let plan = SamplePlan::new(seed, bounds.index, n_windows, policy.eval_samples, policy.fisher_samples);
        let digest = protocol_digest(values, bounds, &plan, digest_steps, policy.minibatch, config.seq_len, horizon);

        records.push(RunRecord {
            policy: policy.kind,
            model: pre.weights.arch,
            dataset: dataset.name.clone(),
            horizon,
            seed,
            batch: bounds.index,
            batch_start: bounds.start,
            batch_end: bounds.end,
            mse: m.mse,
            mae: m.mae,
            rmse: m.rmse,
            smape: m.smape,
            wmape: m.wmape,
            direction_accuracy: m.direction_accuracy,
            adapt_time_seconds,
            protocol_digest: digest,
            report,
        });
    }
    Ok(RunOutcome { records, error: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(len: usize) -> TimeSeriesDataset {
        let values = (0..len)
            .map(|i| (i as f64 * 2.0 * std::f64::consts::PI / 24.0).sin() + 0.001 * i as f64)
            .collect();
        TimeSeriesDataset::new("toy", values, "hourly", 24).unwrap()
    }

    #[test]
    fn schedule_arithmetic() {
        let cfg = HarnessConfig::default();
        assert_eq!(batch_schedule(720 + 750 * 10 + 96, &cfg, 96).len(), 10);
        assert_eq!(batch_schedule(720 + 750 * 10 + 95, &cfg, 96).len(), 9);
        assert!(batch_schedule(720 + 750, &cfg, 96).is_empty());
        let b = batch_schedule(720 + 750 + 96, &cfg, 96);
        assert_eq!(b, vec![BatchBounds { index: 1, start: 720, end: 1470 }]);
    }

    fn small_config() -> (HarnessConfig, TrainConfig) {
        (
            HarnessConfig {
                initial_train_size: 200,
                batch_size: 150,
                max_batches: 3,
                seq_len: 24,
                ..HarnessConfig::default()
            },
            TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
        )
    }

    #[test]
    fn records_per_batch_and_shared_protocol() {
        let (cfg, train) = small_config();
        let d = dataset(200 + 150 * 3 + 12);
        let model = ModelSpec::dlinear();
        let pre = pretrain(&d, &model, &cfg, 12, 1, &train).unwrap();
        let mut digests = Vec::new();
        for kind in PolicyKind::ADAPTIVE {
            let out = run_stream_from(&d, &pre, &PolicyConfig::for_kind(kind), 12, 1, &cfg, &train).unwrap();
            assert!(out.error.is_none());
            assert_eq!(out.records.len(), 3);
            for r in &out.records {
                assert!(r.mse.is_finite() && r.mse >= 0.0);
                assert!((r.rmse * r.rmse - r.mse).abs() < 1e-9);
            }
            digests.push(out.records.iter().map(|r| r.protocol_digest.clone()).collect::<Vec<_>>());
        }
        assert!(digests.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn too_short_dataset_errors() {
        let (cfg, train) = small_config();
        let d = dataset(150);
        assert!(run_stream(&d, &ModelSpec::dlinear(), &PolicyConfig::default(), 12, 0, &cfg, &train).is_err());
    }

    #[test]
    fn digest_is_stable_hex() {
        let d = dataset(30);
        let a = dataset_digest(&d);
        assert_eq!(a.len(), 64);
        assert_eq!(a, dataset_digest(&d));
        assert_ne!(a, dataset_digest(&dataset(31)));
    }
}
