//! Decomposition-linear forecaster.
//!
//! The input is split into a moving-average trend and a seasonal remainder;
//! each part goes through its own `L -> H` linear map and the two outputs
//! are summed. The decomposition has no parameters, so the whole model is
//! the trainable head. Head layout: `[W_trend (H×L), b_trend (H), W_seas (H×L), b_seas (H)]`.

/// Centered moving average with edge-replicated padding.
pub fn moving_average(input: &[f64], kernel: usize) -> Vec<f64> {
    let n = input.len();
    if n == 0 {
        return Vec::new();
    }
    let front = (kernel - 1) / 2;
    let back = kernel - 1 - front;
    let first = input[0];
    let last = input[n - 1];
    let padded: Vec<f64> = std::iter::repeat_n(first, front)
        .chain(input.iter().copied())
        .chain(std::iter::repeat_n(last, back))
        .collect();
    let k = kernel as f64;
    padded.windows(kernel).map(|w| w.iter().sum::<f64>() / k).collect()
}

/// Returns `(trend, seasonal)` with `trend + seasonal == input`.
pub fn decompose(input: &[f64], kernel: usize) -> (Vec<f64>, Vec<f64>) {
    let trend = moving_average(input, kernel);
    let seasonal = input.iter().zip(&trend).map(|(x, t)| x - t).collect();
    (trend, seasonal)
}

pub(crate) fn head_len(seq_len: usize, horizon: usize) -> usize {
    2 * (horizon * seq_len + horizon)
}

/// Backbone features: trend followed by the seasonal remainder.
pub(crate) fn features(input: &[f64], kernel: usize) -> Vec<f64> {
    let (mut trend, seasonal) = decompose(input, kernel);
    trend.extend(seasonal);
    trend
}

pub(crate) fn head_forward(head: &[f64], features: &[f64], seq_len: usize, horizon: usize) -> Vec<f64> {
    let block = horizon * seq_len + horizon;
    let (trend, seasonal) = features.split_at(seq_len);
    let mut out = vec![0.0; horizon];
    for (part, x) in [(0usize, trend), (1, seasonal)] {
        let w = &head[part * block..part * block + horizon * seq_len];
        let b = &head[part * block + horizon * seq_len..(part + 1) * block];
        for (h, o) in out.iter_mut().enumerate() {
            let row = &w[h * seq_len..(h + 1) * seq_len];
            *o += b[h] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
        }
    }
    out
}

pub(crate) fn head_backward(
    head_grad: &mut [f64],
    features: &[f64],
    d_out: &[f64],
    seq_len: usize,
    horizon: usize,
) {
    let block = horizon * seq_len + horizon;
    let (trend, seasonal) = features.split_at(seq_len);
    for (part, x) in [(0usize, trend), (1, seasonal)] {
        let (w, b) = head_grad[part * block..(part + 1) * block].split_at_mut(horizon * seq_len);
        for (h, &d) in d_out.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            b[h] += d;
            for (g, &c) in w[h * seq_len..(h + 1) * seq_len].iter_mut().zip(x) {
                *g += d * c;
            }
        }
    }
}

/// Reference initialisation: averaging weights `1/L`, zero biases.
pub(crate) fn init_head(seq_len: usize, horizon: usize) -> Vec<f64> {
    let block = horizon * seq_len + horizon;
    let mut head = vec![0.0; 2 * block];
    for part in 0..2 {
        head[part * block..part * block + horizon * seq_len].fill(1.0 / seq_len as f64);
    }
    head
}
