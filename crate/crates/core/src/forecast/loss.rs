use crate::error::{Error, Result};

/// Mean SmoothL1 (Huber-style) loss: `0.5 e²/δ` for `|e| < δ`, else `|e| − 0.5δ`.
pub fn smooth_l1(pred: &[f64], target: &[f64], delta: f64) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "prediction length {} vs target length {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, y)| huber(p - y, delta))
        .sum();
    Ok(total / pred.len() as f64)
}

#[inline]
pub(crate) fn huber(e: f64, delta: f64) -> f64 {
    let a = e.abs();
    if a < delta {
        0.5 * e * e / delta
    } else {
        a - 0.5 * delta
    }
}

#[inline]
pub(crate) fn huber_grad(e: f64, delta: f64) -> f64 {
    if e.abs() < delta {
        e / delta
    } else {
        e.signum()
    }
}

/// Loss of one window plus `scale * dLoss/dpred` written into `grad`.
pub(crate) fn smooth_l1_with_grad(pred: &[f64], target: &[f64], delta: f64, scale: f64, grad: &mut [f64]) -> f64 {
    let n = pred.len() as f64;
    let mut total = 0.0;
    for ((g, p), y) in grad.iter_mut().zip(pred).zip(target) {
        let e = p - y;
        total += huber(e, delta);
        *g = scale * huber_grad(e, delta) / n;
    }
    total / n
}
