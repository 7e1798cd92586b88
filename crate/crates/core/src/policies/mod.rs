//! Update policies for streaming adaptation.
//!
//! Every policy is the same head-only adaptation loop with four pluggable
//! parts: the learning-rate rule (fixed, similarity-scaled or DynaTTA's
//! shift-driven sigmoid), an optional EWC penalty, the step budget (fixed or
//! loss-driven early stopping) and an optional regime memory with gated
//! checkpoint reuse.

mod dynatta;
mod early_stop;
mod ewc;
mod learner;
mod plan;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::GateConfig;

pub use dynatta::{DynattaConfig, DynattaState};
pub use early_stop::{early_stop_check, relative_improvement, EarlyStopper};
pub use ewc::{ewc_loss, fisher_estimate, fisher_update, EwcState};
pub use learner::{BatchInput, Learner, LearnerContext};
pub use plan::SamplePlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Tta,
    Ewc,
    Dynatta,
    Rgtta,
    RgttaEwc,
    RgttaDynatta,
    /// Reference only: retrain DLinear from scratch on all rows seen so far.
    Retrain,
}

impl PolicyKind {
    /// The six adaptation policies, baselines first.
    pub const ADAPTIVE: [PolicyKind; 6] = [
        PolicyKind::Tta,
        PolicyKind::Ewc,
        PolicyKind::Dynatta,
        PolicyKind::Rgtta,
        PolicyKind::RgttaEwc,
        PolicyKind::RgttaDynatta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Tta => "tta",
            PolicyKind::Ewc => "ewc",
            PolicyKind::Dynatta => "dynatta",
            PolicyKind::Rgtta => "rgtta",
            PolicyKind::RgttaEwc => "rgtta_ewc",
            PolicyKind::RgttaDynatta => "rgtta_dynatta",
            PolicyKind::Retrain => "retrain",
        }
    }

    /// Uses the regime memory, gate and loss-driven step budget.
    pub fn is_regime_guided(self) -> bool {
        matches!(self, PolicyKind::Rgtta | PolicyKind::RgttaEwc | PolicyKind::RgttaDynatta)
    }

    pub fn uses_ewc(self) -> bool {
        matches!(self, PolicyKind::Ewc | PolicyKind::RgttaEwc)
    }

    pub fn uses_dynatta(self) -> bool {
        matches!(self, PolicyKind::Dynatta | PolicyKind::RgttaDynatta)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "tta" => PolicyKind::Tta,
            "ewc" => PolicyKind::Ewc,
            "dynatta" => PolicyKind::Dynatta,
            "rgtta" | "rg_tta" => PolicyKind::Rgtta,
            "rgtta_ewc" | "rg_ewc" => PolicyKind::RgttaEwc,
            "rgtta_dynatta" | "rg_dynatta" => PolicyKind::RgttaDynatta,
            "retrain" => PolicyKind::Retrain,
            other => return Err(Error::Config(format!("unknown policy '{other}'"))),
        };
        Ok(kind)
    }
}

/// Every tunable of every policy. Fields irrelevant to `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Base learning rate; also the fixed rate of TTA and EWC.
    pub alpha_base: f64,
    /// Similarity scale of the regime-guided learning rate.
    pub gamma: f64,
    pub k_max: usize,
    pub k_min: usize,
    pub patience: usize,
    pub eps_improve: f64,
    /// Loss-driven early stopping for regime-guided policies. When off they
    /// run exactly `k_max` steps.
    pub early_stopping: bool,
    /// Similarity gate `τ`. Values above 1 disable checkpoint loading.
    pub tau: f64,
    /// Loss gate ratio `g`.
    pub gate_ratio: f64,
    pub memory_cap: usize,
    pub tta_steps: usize,
    pub ewc_steps: usize,
    pub dynatta_steps: usize,
    pub ewc_lambda: f64,
    pub fisher_samples: usize,
    pub fisher_clamp_max: f64,
    /// Weight of the previous Fisher in the blend `F = d·F_prev + (1−d)·F_new`.
    pub fisher_decay: f64,
    pub dyn_alpha_min: f64,
    pub dyn_alpha_max: f64,
    pub kappa: f64,
    pub eta: f64,
    pub rtab_cap: usize,
    pub rdb_cap: usize,
    /// DynaTTA warm-up length is `warmup_factor · tta_steps · 3` steps.
    pub warmup_factor: f64,
    /// Windows per gradient minibatch.
    pub minibatch: usize,
    /// Windows in the per-batch evaluation sample.
    pub eval_samples: usize,
    pub smooth_l1_delta: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Rgtta,
            alpha_base: 3e-4,
            gamma: 0.67,
            k_max: 25,
            k_min: 5,
            patience: 3,
            eps_improve: 0.005,
            early_stopping: true,
            tau: 0.75,
            gate_ratio: 0.70,
            memory_cap: 5,
            tta_steps: 20,
            ewc_steps: 15,
            dynatta_steps: 20,
            ewc_lambda: 400.0,
            fisher_samples: 200,
            fisher_clamp_max: 1e4,
            fisher_decay: 0.5,
            dyn_alpha_min: 1e-4,
            dyn_alpha_max: 1e-3,
            kappa: 1.0,
            eta: 0.1,
            rtab_cap: 360,
            rdb_cap: 100,
            warmup_factor: 1.0,
            minibatch: 32,
            eval_samples: 64,
            smooth_l1_delta: 1.0,
        }
    }
}

impl PolicyConfig {
    pub fn for_kind(kind: PolicyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Step budget: fixed count for baselines, `k_max` for regime-guided ones.
    pub fn step_budget(&self) -> usize {
        match self.kind {
            PolicyKind::Tta => self.tta_steps,
            PolicyKind::Ewc => self.ewc_steps,
            PolicyKind::Dynatta => self.dynatta_steps,
            PolicyKind::Rgtta | PolicyKind::RgttaEwc | PolicyKind::RgttaDynatta => self.k_max,
            PolicyKind::Retrain => 0,
        }
    }

    pub fn gate(&self) -> GateConfig {
        GateConfig {
            tau: self.tau,
            loss_ratio: self.gate_ratio,
        }
    }

    pub fn dynatta(&self) -> DynattaConfig {
        DynattaConfig {
            alpha_min: self.dyn_alpha_min,
            alpha_max: self.dyn_alpha_max,
            kappa: self.kappa,
            eta: self.eta,
            rtab_cap: self.rtab_cap,
            rdb_cap: self.rdb_cap,
            history_cap: self.rtab_cap,
            warmup_steps: (self.warmup_factor * self.tta_steps as f64 * 3.0).round() as u64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive_reals = [
            ("alpha_base", self.alpha_base),
            ("eps_improve", self.eps_improve),
            ("tau", self.tau),
            ("dyn_alpha_min", self.dyn_alpha_min),
            ("kappa", self.kappa),
            ("fisher_clamp_max", self.fisher_clamp_max),
            ("smooth_l1_delta", self.smooth_l1_delta),
        ];
        for (name, v) in positive_reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let non_negative = [("gamma", self.gamma), ("ewc_lambda", self.ewc_lambda), ("warmup_factor", self.warmup_factor)];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        let positive_ints = [
            ("k_max", self.k_max),
            ("patience", self.patience),
            ("memory_cap", self.memory_cap),
            ("tta_steps", self.tta_steps),
            ("ewc_steps", self.ewc_steps),
            ("dynatta_steps", self.dynatta_steps),
            ("fisher_samples", self.fisher_samples),
            ("rtab_cap", self.rtab_cap),
            ("rdb_cap", self.rdb_cap),
            ("minibatch", self.minibatch),
            ("eval_samples", self.eval_samples),
        ];
        for (name, v) in positive_ints {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.k_min > self.k_max {
            return Err(Error::Config(format!("k_min ({}) exceeds k_max ({})", self.k_min, self.k_max)));
        }
        if !(self.dyn_alpha_min < self.dyn_alpha_max) {
            return Err(Error::Config("dyn_alpha_min must be below dyn_alpha_max".into()));
        }
        for (name, v) in [("gate_ratio", self.gate_ratio), ("fisher_decay", self.fisher_decay), ("eta", self.eta)] {
            if !(v > 0.0 && v < 1.0) && !(name == "fisher_decay" && v == 0.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Similarity-scaled learning rate `α_base · (1 + γ·(1 − sim))`. A
/// similarity outside `[0, 1]` is clamped with a warning.
pub fn rg_lr(alpha_base: f64, gamma: f64, sim: f64) -> f64 {
    let s = if (0.0..=1.0).contains(&sim) {
        sim
    } else {
        let c = if sim.is_nan() { 0.0 } else { sim.clamp(0.0, 1.0) };
        log::warn!("similarity {sim} outside [0, 1]; clamped to {c}");
        c
    };
    alpha_base * (1.0 + gamma * (1.0 - s))
}

/// Per-batch adaptation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    pub steps_used: usize,
    /// Learning rate of each gradient step.
    pub lr_used: Vec<f64>,
    pub loaded_checkpoint: bool,
    /// Best-match similarity; `None` for policies without memory.
    pub sim: Option<f64>,
    /// Evaluation loss before gating (`ℓ_curr`).
    pub pre_loss: f64,
    /// Loss of the gate-evaluated checkpoint, when one was evaluated.
    pub ckpt_loss: Option<f64>,
    /// Evaluation loss after each step.
    pub step_losses: Vec<f64>,
    /// Evaluation loss after adaptation.
    pub post_loss: f64,
    pub early_stopped: bool,
    /// Batch index of the checkpoint the memory evicted, if any.
    pub evicted_batch: Option<usize>,
    /// Batch index of the loaded checkpoint, if any.
    pub loaded_from_batch: Option<usize>,
}
