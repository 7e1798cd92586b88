use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ModelWeights, OptimizerState};
use crate::data::WindowPair;
use crate::error::{Error, Result};
use crate::seeding::{self, Stream};

/// Budget for full-model training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub minibatch: usize,
    /// Relative epoch-loss improvement below which an epoch counts as stalled.
    pub min_improvement: f64,
    /// Consecutive stalled epochs before halting.
    pub patience: usize,
    pub smooth_l1_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-3,
            minibatch: 32,
            min_improvement: 1e-3,
            patience: 3,
            smooth_l1_delta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub halted_early: bool,
}

/// Train backbone and head jointly with Adam over shuffled minibatches.
pub fn train_full(
    weights: &mut ModelWeights,
    data: &[WindowPair],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InsufficientData("no training windows".into()));
    }
    let nb = weights.backbone.len();
    let mut params: Vec<f64> = weights.backbone.iter().chain(&weights.head).copied().collect();
    let mut opt = OptimizerState::new(params.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(config.epochs),
        halted_early: false,
    };
    let mut stalled = 0;
    let batch = config.minibatch.max(1);

    for epoch in 0..config.epochs {
        let mut rng = seeding::rng(seed, Stream::Training, epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            let windows: Vec<&WindowPair> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, gb, gh) = weights.full_loss_and_grad(&windows, config.smooth_l1_delta);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss at epoch {epoch}")));
            }
            total += loss;
            batches += 1;
            let grad: Vec<f64> = gb.into_iter().chain(gh).collect();
            opt.step(&mut params, &grad, config.learning_rate);
            weights.backbone.copy_from_slice(&params[..nb]);
            weights.head.copy_from_slice(&params[nb..]);
        }
        let epoch_loss = total / batches as f64;
        if let Some(&prev) = report.epoch_losses.last() {
            let rel = if prev.abs() > 0.0 { (prev - epoch_loss) / prev.abs() } else { 0.0 };
            if rel < config.min_improvement {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
        report.epoch_losses.push(epoch_loss);
        if stalled >= config.patience {
            report.halted_early = true;
            break;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_windows;
    use crate::forecast::ModelSpec;

    #[test]
    fn zero_epochs_leave_weights_unchanged() {
        let series: Vec<f64> = (0..60).map(|i| i as f64 / 60.0).collect();
        let data = make_windows(&series, 20, 5, 1);
        let mut w = ModelWeights::init(&ModelSpec::dlinear(), 20, 5, 0).unwrap();
        let before = w.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        train_full(&mut w, &data, &cfg, 0).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn dlinear_learns_linear_trend() {
        // Noiseless ramp scaled into [-1, 1].
        let n = 400;
        let series: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
        let data = make_windows(&series, 48, 12, 1);
        let mut w = ModelWeights::zeros(&ModelSpec::dlinear(), 48, 12).unwrap();
        let mse = |w: &ModelWeights| {
            data.iter()
                .map(|d| {
                    let p = w.forecast(&d.input);
                    p.iter().zip(&d.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64
                })
                .sum::<f64>()
                / data.len() as f64
        };
        let initial = mse(&w);
        let cfg = TrainConfig {
            epochs: 10,
            patience: usize::MAX,
            ..TrainConfig::default()
        };
        let report = train_full(&mut w, &data, &cfg, 1).unwrap();
        for pair in report.epoch_losses.windows(2) {
            assert!(pair[1] < pair[0], "epoch losses {:?}", report.epoch_losses);
        }
        assert!(mse(&w) < 0.1 * initial);
    }

    #[test]
    fn empty_data_is_an_error() {
        let mut w = ModelWeights::zeros(&ModelSpec::dlinear(), 8, 2).unwrap();
        assert!(train_full(&mut w, &[], &TrainConfig::default(), 0).is_err());
    }
}
