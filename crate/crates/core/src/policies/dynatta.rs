//! DynaTTA's shift-driven learning rate.
//!
//! Each gradient step contributes a loss and a backbone embedding. The raw
//! shift score averages three signals: the loss z-score against the loss
//! history, and the normalised distances from the embedding to a ring buffer
//! of recent embeddings (RTAB) and to a reservoir sample of all embeddings
//! (RDB). The score is EMA-smoothed and mapped through a sigmoid onto
//! `[α_min, α_max]`. During warm-up the rate is pinned to `α_min` while the
//! statistics still accumulate.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::seeding::{self, Stream};
use crate::similarity::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynattaConfig {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub kappa: f64,
    pub eta: f64,
    pub rtab_cap: usize,
    pub rdb_cap: usize,
    pub history_cap: usize,
    pub warmup_steps: u64,
}

#[derive(Debug, Clone)]
pub struct DynattaState {
    config: DynattaConfig,
    rtab: VecDeque<Vec<f64>>,
    rdb: Vec<Vec<f64>>,
    rdb_offered: u64,
    loss_history: VecDeque<f64>,
    s_bar: f64,
    steps_seen: u64,
    rng: ChaCha8Rng,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean distance from `e` to the buffer, divided by the buffer's mean
/// distance to its own centre. Zero for buffers with fewer than two entries
/// or no spread.
fn normalised_distance<'a>(e: &[f64], buffer: impl Iterator<Item = &'a Vec<f64>> + Clone) -> f64 {
    let n = buffer.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mut centre = vec![0.0; e.len()];
    for b in buffer.clone() {
        for (c, x) in centre.iter_mut().zip(b) {
            *c += x;
        }
    }
    for c in &mut centre {
        *c /= n as f64;
    }
    let spread = buffer.clone().map(|b| euclid(b, &centre)).sum::<f64>() / n as f64;
    if spread <= EPSILON {
        return 0.0;
    }
    let dist = buffer.map(|b| euclid(e, b)).sum::<f64>() / n as f64;
    dist / spread
}

impl DynattaState {
    /// Cold state; the reservoir draws from a stream derived from `seed`.
    pub fn new(config: DynattaConfig, seed: u64) -> Self {
        Self {
            config,
            rtab: VecDeque::with_capacity(config.rtab_cap),
            rdb: Vec::with_capacity(config.rdb_cap),
            rdb_offered: 0,
            loss_history: VecDeque::with_capacity(config.history_cap),
            s_bar: 0.0,
            steps_seen: 0,
            rng: seeding::rng(seed, Stream::Reservoir, 0),
        }
    }

    pub fn smoothed_score(&self) -> f64 {
        self.s_bar
    }

    pub fn steps_seen(&self) -> u64 {
        self.steps_seen
    }

    pub fn rtab_len(&self) -> usize {
        self.rtab.len()
    }

    pub fn rdb_len(&self) -> usize {
        self.rdb.len()
    }

    /// Sigmoid map of a smoothed score onto `[α_min, α_max]`.
    pub fn rate_for(&self, s_bar: f64) -> f64 {
        let c = &self.config;
        c.alpha_min + (c.alpha_max - c.alpha_min) * sigmoid(c.kappa * s_bar)
    }

    fn z_score(&self, loss: f64) -> f64 {
        let n = self.loss_history.len();
        if n < 3 {
            return 0.0;
        }
        let mean = self.loss_history.iter().sum::<f64>() / n as f64;
        let var = self.loss_history.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd <= EPSILON {
            0.0
        } else {
            (loss - mean) / sd
        }
    }

    /// Raw shift score for a loss and embedding against the current state.
    pub fn shift_score(&self, loss: f64, embedding: &[f64]) -> f64 {
        let z = self.z_score(loss);
        let d_rtab = normalised_distance(embedding, self.rtab.iter());
        let d_rdb = normalised_distance(embedding, self.rdb.iter());
        (z + d_rtab + d_rdb) / 3.0
    }

    /// Learning rate for the next step; updates the score and the buffers.
    pub fn dynatta_lr(&mut self, loss: f64, embedding: &[f64]) -> f64 {
        let s = self.shift_score(loss, embedding);
        if s.is_finite() {
            self.s_bar = (1.0 - self.config.eta) * self.s_bar + self.config.eta * s;
        }
        let alpha = if self.steps_seen < self.config.warmup_steps {
            self.config.alpha_min
        } else {
            self.rate_for(self.s_bar)
        };
        self.push(loss, embedding);
        self.steps_seen += 1;
        alpha
    }

    fn push(&mut self, loss: f64, embedding: &[f64]) {
        if self.loss_history.len() == self.config.history_cap {
            self.loss_history.pop_front();
        }
        self.loss_history.push_back(loss);

        if self.rtab.len() == self.config.rtab_cap {
            self.rtab.pop_front();
        }
        self.rtab.push_back(embedding.to_vec());

        self.rdb_offered += 1;
        if self.rdb.len() < self.config.rdb_cap {
            self.rdb.push(embedding.to_vec());
        } else {
            let j = self.rng.gen_range(0..self.rdb_offered);
            if (j as usize) < self.config.rdb_cap {
                self.rdb[j as usize] = embedding.to_vec();
            }
        }
    }

    /// Forget the loss statistics and the smoothed score; buffers stay.
    pub fn reset_error_stats(&mut self) {
        self.loss_history.clear();
        self.s_bar = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(warmup: u64) -> DynattaConfig {
        DynattaConfig {
            alpha_min: 1e-4,
            alpha_max: 1e-3,
            kappa: 1.0,
            eta: 0.1,
            rtab_cap: 360,
            rdb_cap: 100,
            history_cap: 360,
            warmup_steps: warmup,
        }
    }

    #[test]
    fn sigmoid_map_reference_points() {
        let s = DynattaState::new(config(0), 0);
        assert!((s.rate_for(0.0) - 5.5e-4).abs() < 1e-15);
        assert!((s.rate_for(1e3) - 1e-3).abs() < 1e-12);
        assert!((s.rate_for(-1e3) - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn cold_start_gives_midpoint() {
        let mut s = DynattaState::new(config(0), 0);
        assert_eq!(s.shift_score(3.0, &[1.0, 2.0]), 0.0);
        assert!((s.dynatta_lr(3.0, &[1.0, 2.0]) - 5.5e-4).abs() < 1e-15);
    }

    #[test]
    fn warmup_pins_alpha_min() {
        let mut s = DynattaState::new(config(60), 0);
        for i in 0..60 {
            let a = s.dynatta_lr(1.0 + (i % 3) as f64, &[i as f64, 0.0]);
            assert_eq!(a, 1e-4);
        }
        let a = s.dynatta_lr(1.0, &[0.0, 0.0]);
        assert!(a > 1e-4 && a < 1e-3);
    }

    #[test]
    fn buffers_respect_caps() {
        let mut cfg = config(0);
        cfg.rtab_cap = 5;
        cfg.rdb_cap = 3;
        cfg.history_cap = 4;
        let mut s = DynattaState::new(cfg, 1);
        for i in 0..50 {
            s.dynatta_lr(i as f64, &[i as f64]);
            assert!(s.rtab_len() <= 5 && s.rdb_len() <= 3 && s.loss_history.len() <= 4);
            assert!(s.smoothed_score().is_finite());
        }
        // The ring holds the newest embeddings.
        let newest: Vec<f64> = s.rtab.iter().map(|e| e[0]).collect();
        assert_eq!(newest, vec![45.0, 46.0, 47.0, 48.0, 49.0]);
    }

    #[test]
    fn reservoir_is_roughly_uniform() {
        // Each of 1000 offered items should land in a 100-slot reservoir with
        // probability 0.1; check the mean index of the survivors.
        let mut cfg = config(0);
        cfg.rtab_cap = 2;
        let mut total = 0.0;
        let runs = 50;
        for seed in 0..runs {
            let mut s = DynattaState::new(cfg, seed);
            for i in 0..1000 {
                s.push(0.0, &[i as f64]);
            }
            total += s.rdb.iter().map(|e| e[0]).sum::<f64>() / 100.0;
        }
        let mean = total / runs as f64;
        assert!((mean - 499.5).abs() < 25.0, "mean survivor index {mean}");
    }

    #[test]
    fn normalised_distance_known_case() {
        // Buffer {(-1,0),(1,0)}: centre origin, spread 1. Point (0,0) is at
        // distance 1 from both entries.
        let buf = [vec![-1.0, 0.0], vec![1.0, 0.0]];
        assert!((normalised_distance(&[0.0, 0.0], buf.iter()) - 1.0).abs() < 1e-12);
        assert_eq!(normalised_distance(&[0.0, 0.0], buf[..1].iter()), 0.0);
    }

    #[test]
    fn reset_keeps_buffers() {
        let mut s = DynattaState::new(config(0), 0);
        for i in 0..10 {
            s.dynatta_lr(i as f64, &[i as f64]);
        }
        s.reset_error_stats();
        assert_eq!(s.smoothed_score(), 0.0);
        assert_eq!(s.rtab_len(), 10);
        assert_eq!(s.z_score(5.0), 0.0);
    }
}
