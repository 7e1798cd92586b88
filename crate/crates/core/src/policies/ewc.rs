//! Elastic weight consolidation over the trainable head.

use crate::error::{Error, Result};
use crate::forecast::ModelWeights;

/// Diagonal Fisher and anchor over head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EwcState {
    pub fisher: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl EwcState {
    /// Zero Fisher anchored at `head`.
    pub fn new(head: &[f64]) -> Self {
        Self {
            fisher: vec![0.0; head.len()],
            anchor: head.to_vec(),
        }
    }

    /// `(λ/2) Σ F_i (θ_i − θ*_i)²`.
    pub fn penalty(&self, head: &[f64], lambda: f64) -> f64 {
        let sum: f64 = self
            .fisher
            .iter()
            .zip(head.iter().zip(&self.anchor))
            .map(|(f, (t, a))| f * (t - a) * (t - a))
            .sum();
        0.5 * lambda * sum
    }

    /// Add `λ F_i (θ_i − θ*_i)` to `grad`.
    pub fn add_gradient(&self, head: &[f64], lambda: f64, grad: &mut [f64]) {
        for ((g, f), (t, a)) in grad.iter_mut().zip(&self.fisher).zip(head.iter().zip(&self.anchor)) {
            *g += lambda * f * (t - a);
        }
    }

    /// `F ← clamp(d·F + (1−d)·F_new)`.
    pub fn blend(&mut self, f_new: &[f64], decay: f64, clamp_max: f64) {
        for (f, &n) in self.fisher.iter_mut().zip(f_new) {
            *f = (decay * *f + (1.0 - decay) * n).clamp(0.0, clamp_max);
        }
    }

    pub fn reset_anchor(&mut self, head: &[f64]) {
        self.anchor.clear();
        self.anchor.extend_from_slice(head);
    }
}

/// Task loss plus the EWC penalty.
pub fn ewc_loss(task_loss: f64, head: &[f64], state: &EwcState, lambda: f64) -> f64 {
    task_loss + state.penalty(head, lambda)
}

/// Mean of squared per-sample gradients, clamped to `[0, clamp_max]`.
pub fn fisher_estimate<I>(per_sample_grads: I, len: usize, clamp_max: f64) -> Result<Vec<f64>>
where
    I: IntoIterator,
    I::Item: AsRef<[f64]>,
{
    let mut acc = vec![0.0; len];
    let mut n = 0usize;
    for g in per_sample_grads {
        let g = g.as_ref();
        if g.len() != len {
            return Err(Error::Shape(format!("gradient length {} != {len}", g.len())));
        }
        for (a, &x) in acc.iter_mut().zip(g) {
            *a += x * x;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyInput("Fisher sample"));
    }
    let inv = 1.0 / n as f64;
    for a in &mut acc {
        *a = (*a * inv).clamp(0.0, clamp_max);
    }
    Ok(acc)
}

/// Estimate a fresh Fisher from per-window head gradients of the task loss
/// over `samples` (backbone features and targets), blend it into `state` and
/// move the anchor to the current head.
pub fn fisher_update(
    state: &mut EwcState,
    weights: &ModelWeights,
    samples: &[(&[f64], &[f64])],
    delta: f64,
    decay: f64,
    clamp_max: f64,
) -> Result<()> {
    let grads = samples
        .iter()
        .map(|&s| weights.head_loss_and_grad(&[s], delta).1);
    let f_new = fisher_estimate(grads, weights.head.len(), clamp_max)?;
    state.blend(&f_new, decay, clamp_max);
    state.reset_anchor(&weights.head);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn penalty_zero_at_anchor() {
        let head = vec![0.3, -1.0, 2.0];
        let mut s = EwcState::new(&head);
        s.fisher = vec![5.0; 3];
        assert_eq!(s.penalty(&head, 400.0), 0.0);
    }

    #[test]
    fn unit_displacement_penalty() {
        let mut s = EwcState::new(&[0.0; 4]);
        s.fisher = vec![1.0; 4];
        let head = [0.0, 1.0, 0.0, 0.0];
        assert_eq!(s.penalty(&head, 400.0), 200.0);
        assert_eq!(ewc_loss(1.5, &head, &s, 400.0), 201.5);
    }

    #[test]
    fn fisher_clamp_and_blend() {
        let mut s = EwcState::new(&[0.0; 3]);
        s.fisher = vec![2.0, 4.0, 6.0];
        // Zero gradients halve the Fisher.
        let zero = fisher_estimate([vec![0.0; 3], vec![0.0; 3]], 3, 1e4).unwrap();
        assert_eq!(zero, vec![0.0; 3]);
        s.blend(&zero, 0.5, 1e4);
        assert_eq!(s.fisher, vec![1.0, 2.0, 3.0]);

        // Identical gradients give their squares.
        let g = vec![0.5, -2.0, 3.0];
        let f = fisher_estimate(vec![g.clone(); 7], 3, 1e4).unwrap();
        assert_eq!(f, vec![0.25, 4.0, 9.0]);

        // 200² = 4e4 is clamped.
        let f = fisher_estimate([vec![200.0, 1.0, 0.0]], 3, 1e4).unwrap();
        assert_eq!(f, vec![1e4, 1.0, 0.0]);
        assert!(fisher_estimate(Vec::<Vec<f64>>::new(), 3, 1e4).is_err());
    }

    proptest! {
        #[test]
        fn penalty_and_gradient_match_brute_force(seed in 0u64..1000, n in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let head: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let anchor: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let fisher: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let lambda = 400.0;
            let s = EwcState { fisher: fisher.clone(), anchor: anchor.clone() };
            let mut brute = 0.0;
            for i in 0..n {
                brute += fisher[i] * (head[i] - anchor[i]).powi(2);
            }
            brute *= lambda / 2.0;
            prop_assert!((s.penalty(&head, lambda) - brute).abs() <= 1e-10 * brute.abs().max(1.0));

            let mut grad = vec![0.0; n];
            s.add_gradient(&head, lambda, &mut grad);
            for i in 0..n {
                let h = 1e-4;
                let mut p = head.clone();
                p[i] += h;
                let up = s.penalty(&p, lambda);
                p[i] -= 2.0 * h;
                let down = s.penalty(&p, lambda);
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
                prop_assert!(rel < 1e-6, "coordinate {} fd {} analytic {}", i, fd, grad[i]);
            }
        }
    }
}
