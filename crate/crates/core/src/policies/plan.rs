//! Seeded sampling of window indices within a batch.
//!
//! Every sample depends only on the run seed, the batch index and its slot
//! (evaluation, Fisher, or gradient step `k`), never on the policy, so all
//! policies sharing a seed see the same evaluation windows and the same
//! minibatch at step `k`.

use rand::seq::index;

use crate::seeding::{self, Stream};

const SLOTS_PER_BATCH: u64 = 1 << 16;
const EVAL_SLOT: u64 = 0;
const FISHER_SLOT: u64 = 1;
const FIRST_STEP_SLOT: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePlan {
    seed: u64,
    batch_index: usize,
    n_windows: usize,
    /// Windows shared by the gate comparison and the per-step losses.
    pub eval: Vec<usize>,
    /// Windows used to estimate the Fisher after adaptation.
    pub fisher: Vec<usize>,
}

impl SamplePlan {
    pub fn new(seed: u64, batch_index: usize, n_windows: usize, eval_size: usize, fisher_size: usize) -> Self {
        let mut plan = Self {
            seed,
            batch_index,
            n_windows,
            eval: Vec::new(),
            fisher: Vec::new(),
        };
        plan.eval = plan.draw(EVAL_SLOT, eval_size);
        plan.fisher = plan.draw(FISHER_SLOT, fisher_size);
        plan
    }

    pub fn n_windows(&self) -> usize {
        self.n_windows
    }

    fn draw(&self, slot: u64, size: usize) -> Vec<usize> {
        let amount = size.min(self.n_windows);
        if amount == 0 {
            return Vec::new();
        }
        let mut rng = seeding::rng(self.seed, Stream::Batch, self.batch_index as u64 * SLOTS_PER_BATCH + slot);
        index::sample(&mut rng, self.n_windows, amount).into_vec()
    }

    /// Gradient minibatch for step `step` (0-based), drawn without replacement.
    pub fn minibatch(&self, step: usize, size: usize) -> Vec<usize> {
        self.draw(FIRST_STEP_SLOT + step as u64, size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = SamplePlan::new(3, 2, 559, 64, 200);
        let b = SamplePlan::new(3, 2, 559, 64, 200);
        assert_eq!(a, b);
        assert_eq!(a.eval.len(), 64);
        assert_eq!(a.fisher.len(), 200);
        assert_eq!(a.minibatch(4, 32), b.minibatch(4, 32));
        let mut mb = a.minibatch(0, 32);
        assert!(mb.iter().all(|&i| i < 559));
        mb.sort_unstable();
        mb.dedup();
        assert_eq!(mb.len(), 32);
    }

    #[test]
    fn streams_differ() {
        let a = SamplePlan::new(3, 2, 559, 64, 200);
        assert_ne!(a.minibatch(0, 32), a.minibatch(1, 32));
        assert_ne!(a.eval, SamplePlan::new(3, 3, 559, 64, 200).eval);
        assert_ne!(a.eval, SamplePlan::new(4, 2, 559, 64, 200).eval);
    }

    #[test]
    fn small_batches_use_every_window() {
        let p = SamplePlan::new(0, 1, 10, 64, 200);
        let mut e = p.eval.clone();
        e.sort_unstable();
        assert_eq!(e, (0..10).collect::<Vec<_>>());
        assert!(SamplePlan::new(0, 1, 0, 64, 200).eval.is_empty());
    }
}
