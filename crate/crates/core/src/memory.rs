//! Regime checkpoint library: a FIFO store of adapted models keyed by the
//! regime fingerprint of the batch they were adapted on, with a dual gate
//! (similarity and loss) deciding when a stored checkpoint replaces the live
//! model.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::ScalerState;
use crate::error::{Error, Result};
use crate::forecast::{load_weights, save_weights, ModelWeights};
use crate::similarity::{ensemble_similarity, RegimeFeatures};

/// Bookkeeping attached to a stored checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Stream batch after whose adaptation the checkpoint was taken.
    pub batch_index: usize,
    /// Evaluation loss of the stored weights at store time.
    pub stored_loss: f64,
    pub policy: String,
    /// Logical timestamp: position in the run's store sequence. Wall-clock
    /// time is deliberately not used so run logs stay reproducible.
    pub sequence: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub weights: ModelWeights,
    pub features: RegimeFeatures,
    pub scaler: ScalerState,
    pub meta: CheckpointMeta,
}

impl CheckpointEntry {
    pub fn new(weights: ModelWeights, features: RegimeFeatures, scaler: ScalerState, meta: CheckpointMeta) -> Result<Self> {
        if features.raw_sample.is_empty() {
            return Err(Error::EmptyInput("checkpoint regime sample"));
        }
        Ok(Self {
            weights,
            features,
            scaler,
            meta,
        })
    }
}

/// Thresholds of the dual gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    /// Minimum ensemble similarity `τ`.
    pub tau: f64,
    /// Loss-gate ratio `g`: the checkpoint must reach `ℓ_ckpt < g·ℓ_curr`.
    pub loss_ratio: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            tau: 0.75,
            loss_ratio: 0.70,
        }
    }
}

/// Both gates must pass for a load.
pub fn gate_decision(sim: f64, ckpt_loss: f64, curr_loss: f64, gate: GateConfig) -> bool {
    sim >= gate.tau && ckpt_loss < gate.loss_ratio * curr_loss
}

/// Outcome of gating the best-matching checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOutcome {
    pub loaded: bool,
    /// Checkpoint loss, present only when the similarity gate passed and the
    /// checkpoint could be evaluated.
    pub ckpt_loss: Option<f64>,
    /// Loss of the model that is live after gating.
    pub loss: f64,
}

/// Evaluate the dual gate for `entry`. `eval_ckpt` computes the checkpoint's
/// loss on the batch evaluation sample under the checkpoint's own scaler; it
/// is only invoked when the similarity gate passes. An evaluation failure is
/// logged and treated as "not loaded".
pub fn gate_and_load<F>(sim: f64, entry: Option<&CheckpointEntry>, curr_loss: f64, gate: GateConfig, eval_ckpt: F) -> GateOutcome
where
    F: FnOnce(&CheckpointEntry) -> Result<f64>,
{
    let unloaded = GateOutcome {
        loaded: false,
        ckpt_loss: None,
        loss: curr_loss,
    };
    let Some(entry) = entry else {
        return unloaded;
    };
    if sim < gate.tau {
        return unloaded;
    }
    match eval_ckpt(entry) {
        Ok(ckpt_loss) if ckpt_loss.is_finite() => {
            let loaded = gate_decision(sim, ckpt_loss, curr_loss, gate);
            GateOutcome {
                loaded,
                ckpt_loss: Some(ckpt_loss),
                loss: if loaded { ckpt_loss } else { curr_loss },
            }
        }
        Ok(bad) => {
            log::warn!("checkpoint from batch {} produced loss {bad}; skipped", entry.meta.batch_index);
            unloaded
        }
        Err(e) => {
            log::warn!("checkpoint from batch {} could not be evaluated: {e}; skipped", entry.meta.batch_index);
            unloaded
        }
    }
}

/// Bounded FIFO checkpoint store.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeMemory {
    entries: VecDeque<CheckpointEntry>,
    capacity: usize,
    next_sequence: u64,
}

impl RegimeMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("memory capacity must be at least 1".into()));
        }
        Ok(Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
            next_sequence: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries from oldest to newest.
    pub fn entries(&self) -> impl Iterator<Item = &CheckpointEntry> {
        self.entries.iter()
    }

    /// Sequence number the next stored entry will receive.
    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    /// Append `entry`, assigning it the next sequence number. Returns the
    /// evicted entry when the store was full.
    pub fn store(&mut self, mut entry: CheckpointEntry) -> Option<CheckpointEntry> {
        entry.meta.sequence = self.next_sequence;
        self.next_sequence += 1;
        let evicted = if self.entries.len() == self.capacity {
            self.entries.pop_front()
        } else {
            None
        };
        self.entries.push_back(entry);
        evicted
    }

    /// Highest-similarity entry; ties go to the most recent entry. An empty
    /// store yields `(0.0, None)`.
    pub fn best_match(&self, query: &RegimeFeatures) -> Result<(f64, Option<&CheckpointEntry>)> {
        let mut best: (f64, Option<&CheckpointEntry>) = (0.0, None);
        for entry in &self.entries {
            let sim = ensemble_similarity(query, &entry.features)?;
            if best.1.is_none() || sim >= best.0 {
                best = (sim, Some(entry));
            }
        }
        Ok(best)
    }

    /// Write every entry as `ckpt_<sequence>.rgtw` plus a JSON sidecar.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            let stem = format!("ckpt_{:06}", entry.meta.sequence);
            let weights_path = dir.join(format!("{stem}.rgtw"));
            save_weights(&entry.weights, &weights_path)?;
            let sidecar = Sidecar {
                features: entry.features.clone(),
                scaler: entry.scaler,
                meta: entry.meta.clone(),
            };
            fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&sidecar)?)?;
            written.push(weights_path);
        }
        Ok(written)
    }

    /// Rebuild a store from a directory written by [`RegimeMemory::save_dir`].
    /// Entries that fail to load are logged and skipped; only the newest
    /// `capacity` survivors are kept.
    pub fn load_dir(dir: impl AsRef<Path>, capacity: usize) -> Result<Self> {
        let mut memory = Self::new(capacity)?;
        let mut sidecars: Vec<PathBuf> = fs::read_dir(dir.as_ref())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        sidecars.sort();
        let mut loaded = Vec::new();
        for path in sidecars {
            match read_entry(&path) {
                Ok(entry) => loaded.push(entry),
                Err(e) => log::warn!("skipping checkpoint {}: {e}", path.display()),
            }
        }
        loaded.sort_by_key(|e| e.meta.sequence);
        for entry in loaded {
            let seq = entry.meta.sequence;
            memory.store(entry);
            memory.entries.back_mut().expect("just stored").meta.sequence = seq;
            memory.next_sequence = seq + 1;
        }
        Ok(memory)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    features: RegimeFeatures,
    scaler: ScalerState,
    meta: CheckpointMeta,
}

fn read_entry(sidecar_path: &Path) -> Result<CheckpointEntry> {
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(sidecar_path)?)?;
    let weights = load_weights(sidecar_path.with_extension("rgtw"))?;
    CheckpointEntry::new(weights, sidecar.features, sidecar.scaler, sidecar.meta)
}
