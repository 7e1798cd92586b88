//! Stacked GRU backbone with an MLP head, forward and exact BPTT.
//!
//! Gate equations (gate order r, z, n in every stacked matrix):
//!
//! ```text
//! r  = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z  = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```
//!
//! Backbone layout per layer: `W_ih (3h×in), W_hh (3h×h), b_ih (3h), b_hh (3h)`.
//! The final hidden state of the last layer is the embedding. Head layout:
//! `W1 (h×h), b1 (h), W2 (H×h), b2 (H)` with `tanh` between the two maps.

use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub(crate) struct GruDims {
    pub seq_len: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub layers: usize,
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    in_dim: usize,
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
    end: usize,
}

impl GruDims {
    fn layer(&self, l: usize) -> LayerOffsets {
        let h = self.hidden;
        let mut start = 0;
        let mut in_dim = 1;
        for _ in 0..l {
            start += Self::layer_len(in_dim, h);
            in_dim = h;
        }
        let w_ih = start;
        let w_hh = w_ih + 3 * h * in_dim;
        let b_ih = w_hh + 3 * h * h;
        let b_hh = b_ih + 3 * h;
        LayerOffsets {
            in_dim,
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            end: b_hh + 3 * h,
        }
    }

    fn layer_len(in_dim: usize, h: usize) -> usize {
        3 * h * in_dim + 3 * h * h + 6 * h
    }

    pub fn backbone_len(&self) -> usize {
        self.layer(self.layers - 1).end
    }

    pub fn head_len(&self) -> usize {
        let h = self.hidden;
        h * h + h + self.horizon * h + self.horizon
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dot product with four independent accumulators so the loop vectorises.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a4, a_rest) = a[..n].split_at(n - n % 4);
    let (b4, b_rest) = b[..n].split_at(n - n % 4);
    let mut acc = [0.0; 4];
    for (x, y) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = a_rest.iter().zip(b_rest).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Activations of one layer over the sequence, kept for BPTT.
struct LayerTrace {
    /// Inputs, `T × in_dim`.
    x: Vec<f64>,
    /// Hidden states `h_0 .. h_T`, `(T + 1) × h`.
    h: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `W_hn h + b_hn`, needed for the reset-gate gradient.
    hn: Vec<f64>,
}

fn forward_layer(p: &[f64], off: LayerOffsets, hid: usize, x: Vec<f64>, steps: usize) -> LayerTrace {
    let in_dim = off.in_dim;
    let mut tr = LayerTrace {
        h: vec![0.0; (steps + 1) * hid],
        r: vec![0.0; steps * hid],
        z: vec![0.0; steps * hid],
        n: vec![0.0; steps * hid],
        hn: vec![0.0; steps * hid],
        x,
    };
    let w_ih = &p[off.w_ih..off.w_hh];
    let w_hh = &p[off.w_hh..off.b_ih];
    let b_ih = &p[off.b_ih..off.b_hh];
    let b_hh = &p[off.b_hh..off.end];
    for t in 0..steps {
        let xt = &tr.x[t * in_dim..(t + 1) * in_dim];
        let (prev, next) = tr.h.split_at_mut((t + 1) * hid);
        let hp = &prev[t * hid..];
        let hnext = &mut next[..hid];
        for j in 0..hid {
            let gi = |g: usize| b_ih[g * hid + j] + dot(&w_ih[(g * hid + j) * in_dim..(g * hid + j + 1) * in_dim], xt);
            let gh = |g: usize| b_hh[g * hid + j] + dot(&w_hh[(g * hid + j) * hid..(g * hid + j + 1) * hid], hp);
            let r = sigmoid(gi(0) + gh(0));
            let z = sigmoid(gi(1) + gh(1));
            let hn = gh(2);
            let n = (gi(2) + r * hn).tanh();
            let k = t * hid + j;
            tr.r[k] = r;
            tr.z[k] = z;
            tr.n[k] = n;
            tr.hn[k] = hn;
            hnext[j] = (1.0 - z) * n + z * hp[j];
        }
    }
    tr
}

/// Backpropagate through one layer. `dh_out` holds `T × h` gradients w.r.t.
/// the layer outputs `h_1 .. h_T`. Returns gradients w.r.t. the inputs.
fn backward_layer(
    p: &[f64],
    grad: &mut [f64],
    off: LayerOffsets,
    hid: usize,
    tr: &LayerTrace,
    dh_out: &[f64],
    steps: usize,
    need_dx: bool,
) -> Vec<f64> {
    let in_dim = off.in_dim;
    let mut dx = if need_dx { vec![0.0; steps * in_dim] } else { Vec::new() };
    let mut dh_next = vec![0.0; hid];
    let mut ga = vec![0.0; 3 * hid];
    let mut gh = vec![0.0; 3 * hid];
    let w_ih = &p[off.w_ih..off.w_hh];
    let w_hh = &p[off.w_hh..off.b_ih];
    for t in (0..steps).rev() {
        let hp = &tr.h[t * hid..(t + 1) * hid];
        let xt = &tr.x[t * in_dim..(t + 1) * in_dim];
        let mut dh_prev = vec![0.0; hid];
        for j in 0..hid {
            let k = t * hid + j;
            let dh = dh_out[k] + dh_next[j];
            let (r, z, n, hn) = (tr.r[k], tr.z[k], tr.n[k], tr.hn[k]);
            let dn = dh * (1.0 - z);
            let dz = dh * (hp[j] - n);
            dh_prev[j] = dh * z;
            let da_n = dn * (1.0 - n * n);
            let d_hn = da_n * r;
            let da_r = da_n * hn * r * (1.0 - r);
            let da_z = dz * z * (1.0 - z);
            ga[j] = da_r;
            ga[hid + j] = da_z;
            ga[2 * hid + j] = da_n;
            gh[j] = da_r;
            gh[hid + j] = da_z;
            gh[2 * hid + j] = d_hn;
        }
        {
            let (g_wih, rest) = grad[off.w_ih..off.end].split_at_mut(3 * hid * in_dim);
            let (g_whh, rest) = rest.split_at_mut(3 * hid * hid);
            let (g_bih, g_bhh) = rest.split_at_mut(3 * hid);
            for row in 0..3 * hid {
                let a = ga[row];
                g_bih[row] += a;
                for (g, &x) in g_wih[row * in_dim..(row + 1) * in_dim].iter_mut().zip(xt) {
                    *g += a * x;
                }
                let b = gh[row];
                g_bhh[row] += b;
                for (g, &h) in g_whh[row * hid..(row + 1) * hid].iter_mut().zip(hp) {
                    *g += b * h;
                }
            }
        }
        for row in 0..3 * hid {
            let b = gh[row];
            if b != 0.0 {
                for (d, &w) in dh_prev.iter_mut().zip(&w_hh[row * hid..(row + 1) * hid]) {
                    *d += b * w;
                }
            }
            if need_dx {
                let a = ga[row];
                let dxt = &mut dx[t * in_dim..(t + 1) * in_dim];
                for (d, &w) in dxt.iter_mut().zip(&w_ih[row * in_dim..(row + 1) * in_dim]) {
                    *d += a * w;
                }
            }
        }
        dh_next = dh_prev;
    }
    dx
}

pub(crate) struct BackboneTrace {
    layers: Vec<LayerTrace>,
}

pub(crate) fn backbone_forward(dims: &GruDims, backbone: &[f64], input: &[f64]) -> (Vec<f64>, BackboneTrace) {
    let steps = dims.seq_len;
    let hid = dims.hidden;
    let mut layers = Vec::with_capacity(dims.layers);
    let mut x = input.to_vec();
    for l in 0..dims.layers {
        let tr = forward_layer(backbone, dims.layer(l), hid, x, steps);
        x = tr.h[hid..].to_vec();
        layers.push(tr);
    }
    let last = layers.last().expect("at least one layer");
    let embedding = last.h[steps * hid..].to_vec();
    (embedding, BackboneTrace { layers })
}

pub(crate) fn embed(dims: &GruDims, backbone: &[f64], input: &[f64]) -> Vec<f64> {
    backbone_forward(dims, backbone, input).0
}

/// Accumulate backbone gradients given `d_embedding`.
pub(crate) fn backbone_backward(dims: &GruDims, backbone: &[f64], grad: &mut [f64], trace: &BackboneTrace, d_embedding: &[f64]) {
    let steps = dims.seq_len;
    let hid = dims.hidden;
    let mut dh_out = vec![0.0; steps * hid];
    dh_out[(steps - 1) * hid..].copy_from_slice(d_embedding);
    for l in (0..dims.layers).rev() {
        let need_dx = l > 0;
        dh_out = backward_layer(backbone, grad, dims.layer(l), hid, &trace.layers[l], &dh_out, steps, need_dx);
    }
}

struct HeadOffsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

fn head_offsets(dims: &GruDims) -> HeadOffsets {
    let h = dims.hidden;
    HeadOffsets {
        w1: 0,
        b1: h * h,
        w2: h * h + h,
        b2: h * h + h + dims.horizon * h,
    }
}

fn head_hidden(dims: &GruDims, head: &[f64], embedding: &[f64]) -> Vec<f64> {
    let h = dims.hidden;
    let o = head_offsets(dims);
    (0..h)
        .map(|i| (head[o.b1 + i] + dot(&head[o.w1 + i * h..o.w1 + (i + 1) * h], embedding)).tanh())
        .collect()
}

pub(crate) fn head_forward(dims: &GruDims, head: &[f64], embedding: &[f64]) -> Vec<f64> {
    let h = dims.hidden;
    let o = head_offsets(dims);
    let a = head_hidden(dims, head, embedding);
    (0..dims.horizon)
        .map(|k| head[o.b2 + k] + dot(&head[o.w2 + k * h..o.w2 + (k + 1) * h], &a))
        .collect()
}

/// Accumulate head gradients; returns the gradient w.r.t. the embedding.
pub(crate) fn head_backward(dims: &GruDims, head: &[f64], grad: &mut [f64], embedding: &[f64], d_out: &[f64]) -> Vec<f64> {
    let h = dims.hidden;
    let o = head_offsets(dims);
    let a = head_hidden(dims, head, embedding);
    let mut da = vec![0.0; h];
    for (k, &d) in d_out.iter().enumerate() {
        grad[o.b2 + k] += d;
        let w = &head[o.w2 + k * h..o.w2 + (k + 1) * h];
        for i in 0..h {
            grad[o.w2 + k * h + i] += d * a[i];
            da[i] += d * w[i];
        }
    }
    let mut de = vec![0.0; h];
    for i in 0..h {
        let dpre = da[i] * (1.0 - a[i] * a[i]);
        grad[o.b1 + i] += dpre;
        let w = &head[o.w1 + i * h..o.w1 + (i + 1) * h];
        for j in 0..h {
            grad[o.w1 + i * h + j] += dpre * embedding[j];
            de[j] += dpre * w[j];
        }
    }
    de
}

/// Uniform `±1/sqrt(h)` for the recurrent stack, `±1/sqrt(fan_in)` for the head.
pub(crate) fn init(dims: &GruDims, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let k = 1.0 / (dims.hidden as f64).sqrt();
    let backbone = (0..dims.backbone_len()).map(|_| rng.gen_range(-k..k)).collect();
    // Both head layers have fan-in h.
    let head = (0..dims.head_len()).map(|_| rng.gen_range(-k..k)).collect();
    (backbone, head)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        let dims = GruDims {
            seq_len: 96,
            horizon: 96,
            hidden: 64,
            layers: 2,
        };
        // Layer 1: 3·64·1 + 3·64·64 + 6·64; layer 2: 2·3·64·64 + 6·64.
        assert_eq!(dims.backbone_len(), 12_864 + 24_960);
        // 64·64 + 64 + 96·64 + 96
        assert_eq!(dims.head_len(), 10_400);
    }

    #[test]
    fn zero_weights_keep_hidden_state_at_zero() {
        let dims = GruDims {
            seq_len: 5,
            horizon: 3,
            hidden: 4,
            layers: 2,
        };
        let backbone = vec![0.0; dims.backbone_len()];
        let head = vec![0.0; dims.head_len()];
        let e = embed(&dims, &backbone, &[0.0; 5]);
        assert_eq!(e, vec![0.0; 4]);
        assert_eq!(head_forward(&dims, &head, &e), vec![0.0; 3]);
    }
}
