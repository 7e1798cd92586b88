//! The per-run adaptation loop shared by every policy.
//!
//! Per batch: refit the scaler on the batch, window it, evaluate the live
//! model on the seeded evaluation sample, optionally gate a stored
//! checkpoint, take head-only Adam steps (fresh optimizer state per batch)
//! under the policy's learning-rate rule and step budget, then update EWC
//! statistics and store a checkpoint where the policy asks for it.

use crate::data::{fit_scaler, make_windows, ScalerState, WindowPair};
use crate::error::{Error, Result};
use crate::forecast::{train_full, Architecture, ModelSpec, ModelWeights, OptimizerState, TrainConfig};
use crate::memory::{gate_and_load, CheckpointEntry, CheckpointMeta, RegimeMemory};
use crate::seeding::{self, Stream};
use crate::similarity::extract_features;

use super::{
    fisher_estimate, fisher_update, rg_lr, AdaptReport, DynattaState, EarlyStopper, EwcState, PolicyConfig, PolicyKind,
    SamplePlan,
};

/// Run-level settings a learner needs besides its policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerContext {
    pub season_length: usize,
    pub seed: u64,
    /// Budget for the retrain reference policy.
    pub train: TrainConfig,
}

/// One incoming batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchInput<'a> {
    /// 1-based position in the stream.
    pub index: usize,
    /// Raw rows of this batch.
    pub values: &'a [f64],
    /// Every raw row seen so far, this batch included. Only retrain reads it.
    pub history: &'a [f64],
}

/// Scaled windows of a batch with lazily computed backbone features. Valid
/// for one scaler and one backbone.
struct BatchView<'a> {
    windows: &'a [WindowPair],
    scaler: ScalerState,
    feats: Vec<Option<Vec<f64>>>,
    targets: Vec<Option<Vec<f64>>>,
}

impl<'a> BatchView<'a> {
    fn new(windows: &'a [WindowPair], scaler: ScalerState) -> Self {
        Self {
            windows,
            scaler,
            feats: vec![None; windows.len()],
            targets: vec![None; windows.len()],
        }
    }

    fn prepare(&mut self, weights: &ModelWeights, idx: &[usize]) {
        for &i in idx {
            if self.feats[i].is_none() {
                let w = &self.windows[i];
                self.feats[i] = Some(weights.embed(&self.scaler.transform_slice(&w.input)));
                self.targets[i] = Some(self.scaler.transform_slice(&w.target));
            }
        }
    }

    /// Prepared `(features, target)` pairs; `prepare` must have run on `idx`.
    fn samples(&self, idx: &[usize]) -> Vec<(&[f64], &[f64])> {
        idx.iter()
            .map(|&i| {
                (
                    self.feats[i].as_deref().expect("features prepared"),
                    self.targets[i].as_deref().expect("targets prepared"),
                )
            })
            .collect()
    }

    fn loss(&mut self, weights: &ModelWeights, idx: &[usize], delta: f64) -> f64 {
        self.prepare(weights, idx);
        weights.head_loss(&weights.head, self.samples(idx), delta)
    }
}

fn mean_embedding(samples: &[(&[f64], &[f64])]) -> Vec<f64> {
    let dim = samples.first().map_or(0, |s| s.0.len());
    let mut mean = vec![0.0; dim];
    for (f, _) in samples {
        for (m, x) in mean.iter_mut().zip(*f) {
            *m += x;
        }
    }
    let n = samples.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn finite(value: f64, what: &str, batch: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Diverged(format!("non-finite {what} ({value}) at batch {batch}")))
    }
}

/// Owns the live model, its scaler and all policy state for one run.
#[derive(Debug, Clone)]
pub struct Learner {
    config: PolicyConfig,
    ctx: LearnerContext,
    weights: ModelWeights,
    scaler: ScalerState,
    frozen_backbone: Vec<f64>,
    memory: Option<RegimeMemory>,
    ewc: Option<EwcState>,
    dynatta: Option<DynattaState>,
}

impl Learner {
    /// Start from a trained model and the scaler it was trained under.
    pub fn new(config: PolicyConfig, weights: ModelWeights, scaler: ScalerState, ctx: LearnerContext) -> Result<Self> {
        config.validate()?;
        let kind = config.kind;
        if kind == PolicyKind::Retrain && weights.arch != Architecture::DLinear {
            return Err(Error::Config("the retrain policy supports DLinear only".into()));
        }
        let memory = if kind.is_regime_guided() {
            Some(RegimeMemory::new(config.memory_cap)?)
        } else {
            None
        };
        let ewc = kind.uses_ewc().then(|| EwcState::new(&weights.head));
        let dynatta = kind.uses_dynatta().then(|| DynattaState::new(config.dynatta(), ctx.seed));
        Ok(Self {
            frozen_backbone: weights.backbone.clone(),
            config,
            ctx,
            weights,
            scaler,
            memory,
            ewc,
            dynatta,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn scaler(&self) -> ScalerState {
        self.scaler
    }

    pub fn memory(&self) -> Option<&RegimeMemory> {
        self.memory.as_ref()
    }

    pub fn ewc(&self) -> Option<&EwcState> {
        self.ewc.as_ref()
    }

    pub fn dynatta(&self) -> Option<&DynattaState> {
        self.dynatta.as_ref()
    }

    /// Seed the EWC Fisher from already-scaled training windows and anchor at
    /// the current head. No-op for policies without EWC.
    pub fn init_fisher(&mut self, scaled_windows: &[WindowPair]) -> Result<()> {
        let Some(ewc) = self.ewc.as_mut() else {
            return Ok(());
        };
        let plan = SamplePlan::new(self.ctx.seed, 0, scaled_windows.len(), 0, self.config.fisher_samples);
        let delta = self.config.smooth_l1_delta;
        let grads = plan.fisher.iter().map(|&i| {
            let w = &scaled_windows[i];
            let feat = self.weights.embed(&w.input);
            self.weights.head_loss_and_grad(&[(&feat, &w.target)], delta).1
        });
        ewc.fisher = fisher_estimate(grads, self.weights.head.len(), self.config.fisher_clamp_max)?;
        ewc.reset_anchor(&self.weights.head);
        Ok(())
    }

    /// Original-scale forecast from the last `seq_len` raw rows.
    pub fn forecast(&self, raw_input: &[f64]) -> Result<Vec<f64>> {
        if raw_input.len() != self.weights.shape.seq_len {
            return Err(Error::Shape(format!(
                "forecast input has {} rows, model expects {}",
                raw_input.len(),
                self.weights.shape.seq_len
            )));
        }
        let scaled = self.weights.forecast(&self.scaler.transform_slice(raw_input));
        Ok(self.scaler.inverse_slice(&scaled))
    }

    /// Adapt to one batch according to the policy.
    pub fn adapt_batch(&mut self, batch: &BatchInput<'_>) -> Result<AdaptReport> {
        if self.config.kind == PolicyKind::Retrain {
            return self.retrain(batch);
        }
        let cfg = self.config.clone();
        let kind = cfg.kind;
        let delta = cfg.smooth_l1_delta;
        let shape = self.weights.shape;
        let windows = make_windows(batch.values, shape.seq_len, shape.horizon, 1);
        if windows.is_empty() {
            return Err(Error::InsufficientData(format!(
                "batch {} has {} rows, fewer than seq_len + horizon",
                batch.index,
                batch.values.len()
            )));
        }
        let plan = SamplePlan::new(self.ctx.seed, batch.index, windows.len(), cfg.eval_samples, cfg.fisher_samples);
        let mut scaler = fit_scaler(batch.values)?;
        let mut view = BatchView::new(&windows, scaler);
        let pre_loss = finite(view.loss(&self.weights, &plan.eval, delta), "evaluation loss", batch.index)?;

        let mut report = AdaptReport {
            steps_used: 0,
            lr_used: Vec::new(),
            loaded_checkpoint: false,
            sim: None,
            pre_loss,
            ckpt_loss: None,
            step_losses: Vec::new(),
            post_loss: pre_loss,
            early_stopped: false,
            evicted_batch: None,
            loaded_from_batch: None,
        };

        let mut current_loss = pre_loss;
        let mut query = None;
        if let Some(memory) = self.memory.as_ref() {
            let q = extract_features(batch.values, self.ctx.season_length)?;
            let (sim, entry) = memory.best_match(&q)?;
            report.sim = Some(sim);
            let mut ckpt_view = None;
            let live = &self.weights;
            let outcome = gate_and_load(sim, entry, pre_loss, cfg.gate(), |e| {
                live.check_compatible(&e.weights)?;
                let mut v = BatchView::new(&windows, e.scaler);
                let loss = v.loss(&e.weights, &plan.eval, delta);
                ckpt_view = Some(v);
                Ok(loss)
            });
            report.ckpt_loss = outcome.ckpt_loss;
            if outcome.loaded {
                let e = entry.expect("loaded implies an entry");
                self.weights = e.weights.clone();
                scaler = e.scaler;
                view = ckpt_view.expect("evaluated before loading");
                report.loaded_checkpoint = true;
                report.loaded_from_batch = Some(e.meta.batch_index);
                if let Some(ewc) = self.ewc.as_mut() {
                    ewc.reset_anchor(&self.weights.head);
                }
                if let Some(d) = self.dynatta.as_mut() {
                    d.reset_error_stats();
                }
            }
            current_loss = outcome.loss;
            query = Some((q, sim));
        }

        let fixed_lr = match (kind, &query) {
            (PolicyKind::Rgtta | PolicyKind::RgttaEwc, Some((_, sim))) => rg_lr(cfg.alpha_base, cfg.gamma, *sim),
            _ => cfg.alpha_base,
        };
        let early_stopping = kind.is_regime_guided() && cfg.early_stopping;
        let mut stopper = EarlyStopper::new(current_loss, cfg.k_min, cfg.patience, cfg.eps_improve);
        let mut opt = OptimizerState::new(self.weights.head.len());
        for k in 0..cfg.step_budget() {
            let mb = plan.minibatch(k, cfg.minibatch);
            view.prepare(&self.weights, &mb);
            let samples = view.samples(&mb);
            let (task_loss, mut grad) = self.weights.head_loss_and_grad(&samples, delta);
            finite(task_loss, "task loss", batch.index)?;
            if let Some(ewc) = self.ewc.as_ref() {
                ewc.add_gradient(&self.weights.head, cfg.ewc_lambda, &mut grad);
            }
            let lr = match self.dynatta.as_mut() {
                Some(d) => d.dynatta_lr(task_loss, &mean_embedding(&samples)),
                None => fixed_lr,
            };
            opt.step(&mut self.weights.head, &grad, lr);
            report.lr_used.push(lr);
            let loss = finite(view.loss(&self.weights, &plan.eval, delta), "evaluation loss", batch.index)?;
            report.step_losses.push(loss);
            if early_stopping && stopper.observe(loss) {
                report.early_stopped = true;
                break;
            }
        }
        report.steps_used = report.lr_used.len();
        report.post_loss = report.step_losses.last().copied().unwrap_or(current_loss);

        if let Some(ewc) = self.ewc.as_mut() {
            view.prepare(&self.weights, &plan.fisher);
            let samples = view.samples(&plan.fisher);
            fisher_update(ewc, &self.weights, &samples, delta, cfg.fisher_decay, cfg.fisher_clamp_max)?;
        }

        if let (Some(memory), Some((q, _))) = (self.memory.as_mut(), query) {
            let entry = CheckpointEntry::new(
                self.weights.clone(),
                q,
                scaler,
                CheckpointMeta {
                    batch_index: batch.index,
                    stored_loss: report.post_loss,
                    policy: kind.name().to_string(),
                    sequence: 0,
                },
            )?;
            report.evicted_batch = memory.store(entry).map(|e| e.meta.batch_index);
        }

        if self.weights.backbone != self.frozen_backbone {
            return Err(Error::Invariant(format!("backbone changed while adapting batch {}", batch.index)));
        }
        self.scaler = scaler;
        Ok(report)
    }

    fn retrain(&mut self, batch: &BatchInput<'_>) -> Result<AdaptReport> {
        let shape = self.weights.shape;
        let delta = self.config.smooth_l1_delta;
        let scaler = fit_scaler(batch.history)?;
        let train: Vec<WindowPair> = make_windows(batch.history, shape.seq_len, shape.horizon, 1)
            .iter()
            .map(|w| scaler.transform_window(w))
            .collect();
        let batch_windows = make_windows(batch.values, shape.seq_len, shape.horizon, 1);
        let plan = SamplePlan::new(self.ctx.seed, batch.index, batch_windows.len(), self.config.eval_samples, 0);
        let pre_loss = BatchView::new(&batch_windows, scaler).loss(&self.weights, &plan.eval, delta);

        let spec = ModelSpec {
            arch: self.weights.arch,
            hidden: shape.hidden,
            layers: shape.layers,
            kernel: shape.kernel,
        };
        let index = batch.index as u64;
        let mut fresh = ModelWeights::init(&spec, shape.seq_len, shape.horizon, seeding::derive(self.ctx.seed, Stream::Init, index))?;
        let trained = train_full(&mut fresh, &train, &self.ctx.train, seeding::derive(self.ctx.seed, Stream::Training, index))?;
        self.weights = fresh;
        self.frozen_backbone = self.weights.backbone.clone();
        self.scaler = scaler;
        let post_loss = BatchView::new(&batch_windows, scaler).loss(&self.weights, &plan.eval, delta);
        Ok(AdaptReport {
            steps_used: trained.epoch_losses.len(),
            lr_used: vec![self.ctx.train.learning_rate; trained.epoch_losses.len()],
            loaded_checkpoint: false,
            sim: None,
            pre_loss,
            ckpt_loss: None,
            step_losses: trained.epoch_losses,
            post_loss,
            early_stopped: trained.halted_early,
            evicted_batch: None,
            loaded_from_batch: None,
        })
    }
}
