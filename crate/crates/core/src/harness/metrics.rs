//! Per-forecast error metrics on the original scale.

use serde::{Deserialize, Serialize};

use crate::similarity::EPSILON;

/// Default per-step decay of the wMAPE weights.
pub const WMAPE_DECAY: f64 = 0.97;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    /// Percent, in `[0, 200]`.
    pub smape: f64,
    pub wmape: f64,
    /// Fraction in `[0, 1]`.
    pub direction_accuracy: f64,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Metrics with the default wMAPE decay.
pub fn compute_metrics(pred: &[f64], truth: &[f64], prior: f64) -> MetricSet {
    compute_metrics_with_decay(pred, truth, prior, WMAPE_DECAY)
}

/// Metrics of an `H`-step forecast.
///
/// wMAPE weights are `decay^(H−1−i)`, so the last horizon step has weight 1
/// and earlier steps grow geometrically. Direction accuracy compares the
/// sign of each series' step-to-step change, both starting from `prior`
/// (the last observed value).
///
/// # Panics
/// If `pred` and `truth` differ in length or are empty.
pub fn compute_metrics_with_decay(pred: &[f64], truth: &[f64], prior: f64, decay: f64) -> MetricSet {
    assert_eq!(pred.len(), truth.len(), "prediction and truth lengths differ");
    assert!(!pred.is_empty(), "empty forecast");
    let h = pred.len();
    let n = h as f64;
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut smape = 0.0;
    let mut w_err = 0.0;
    let mut w_abs = 0.0;
    let mut hits = 0usize;
    let mut prev_p = prior;
    let mut prev_y = prior;
    for (i, (&p, &y)) in pred.iter().zip(truth).enumerate() {
        let e = p - y;
        se += e * e;
        ae += e.abs();
        smape += 2.0 * e.abs() / (p.abs() + y.abs() + EPSILON);
        let w = decay.powi((h - 1 - i) as i32);
        w_err += w * e.abs();
        w_abs += w * y.abs();
        if sign(p - prev_p) == sign(y - prev_y) {
            hits += 1;
        }
        prev_p = p;
        prev_y = y;
    }
    let mse = se / n;
    MetricSet {
        mse,
        mae: ae / n,
        rmse: mse.sqrt(),
        smape: 100.0 * smape / n,
        wmape: w_err / w_abs.max(EPSILON),
        direction_accuracy: hits as f64 / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_forecast() {
        let y = [1.0, 3.0, 2.0, 5.0];
        let m = compute_metrics(&y, &y, 0.0);
        assert_eq!((m.mse, m.mae, m.rmse, m.smape, m.wmape), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(m.direction_accuracy, 1.0);
    }

    #[test]
    fn constant_offset_on_increasing_truth() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let p: Vec<f64> = y.iter().map(|v| v + 1.0).collect();
        let m = compute_metrics(&p, &y, 0.0);
        assert_eq!((m.mse, m.mae), (1.0, 1.0));
        assert_eq!(m.direction_accuracy, 1.0);
    }

    #[test]
    fn three_element_hand_case() {
        let m = compute_metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 4.0], 1.0);
        assert!((m.mse - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.direction_accuracy - 1.0 / 3.0).abs() < 1e-15);
        // sMAPE: (2/3 + 0 + 2/7) · 100/3.
        let smape = 100.0 / 3.0 * (2.0 / 3.0 + 2.0 / 7.0);
        assert!((m.smape - smape).abs() < 1e-6);
        // wMAPE weights [0.97², 0.97, 1].
        let w = [0.97f64 * 0.97, 0.97, 1.0];
        let wmape = (w[0] * 1.0 + w[2] * 1.0) / (w[0] * 2.0 + w[1] * 2.0 + w[2] * 4.0);
        assert!((m.wmape - wmape).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn rmse_squared_is_mse(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..100), prior in -10.0f64..10.0) {
            let (p, y): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let m = compute_metrics(&p, &y, prior);
            prop_assert!((m.rmse * m.rmse - m.mse).abs() <= 1e-9 * m.mse.max(1.0));
            prop_assert!(m.mse >= 0.0 && m.mae >= 0.0 && m.smape >= 0.0 && m.wmape >= 0.0);
            prop_assert!((0.0..=1.0).contains(&m.direction_accuracy));
        }
    }
}
