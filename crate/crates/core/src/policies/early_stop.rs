//! Loss-driven early stopping.
//!
//! `history[0]` is the loss before the first step and `history[k]` the loss
//! after step `k`. Steps `k ≤ K_min` are never counted; from step `K_min + 1`
//! on, each step whose relative improvement is below `ε` increments a
//! patience counter and any other step resets it. Adaptation halts when the
//! counter reaches `patience`, so the earliest possible halt is step
//! `K_min + patience`.

/// `(prev − curr) / |prev|`, or 0 when `prev` is 0.
pub fn relative_improvement(prev: f64, curr: f64) -> f64 {
    if prev == 0.0 {
        0.0
    } else {
        (prev - curr) / prev.abs()
    }
}

/// Incremental form of [`early_stop_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopper {
    k_min: usize,
    patience: usize,
    eps: f64,
    counter: usize,
    step: usize,
    last: f64,
}

impl EarlyStopper {
    pub fn new(initial_loss: f64, k_min: usize, patience: usize, eps: f64) -> Self {
        Self {
            k_min,
            patience,
            eps,
            counter: 0,
            step: 0,
            last: initial_loss,
        }
    }

    /// Record the loss after the next step; returns `true` when adaptation
    /// should halt.
    pub fn observe(&mut self, loss: f64) -> bool {
        self.step += 1;
        let rel = relative_improvement(self.last, loss);
        self.last = loss;
        if self.step > self.k_min && rel < self.eps {
            self.counter += 1;
        } else {
            self.counter = 0;
        }
        self.counter >= self.patience
    }

    pub fn steps(&self) -> usize {
        self.step
    }
}

/// Whether adaptation halts at the last step of `history`.
pub fn early_stop_check(history: &[f64], k_min: usize, patience: usize, eps: f64) -> bool {
    let Some((&first, rest)) = history.split_first() else {
        return false;
    };
    let mut stopper = EarlyStopper::new(first, k_min, patience, eps);
    let mut halt = false;
    for &loss in rest {
        halt = stopper.observe(loss);
    }
    halt
}
