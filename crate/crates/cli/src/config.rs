//! Optional TOML configuration file.
//!
//! ```toml
//! [harness]          # protocol sizes; --horizons and --seeds win over these
//! initial_train_size = 720
//!
//! [train]            # full-model training budget
//! epochs = 50
//!
//! [policy]           # overrides applied to every policy
//! tau = 0.8
//! ```

use std::path::Path;

use anyhow::{bail, Context};
use rgtta::data::HarnessConfig;
use rgtta::forecast::TrainConfig;
use rgtta::policies::{PolicyConfig, PolicyKind};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub harness: Option<HarnessConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub policy: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.policy.contains_key("kind") {
            bail!("[policy] cannot set 'kind'; choose policies with --policies");
        }
        // Fail on unknown keys before any run starts.
        cfg.policy_for(PolicyKind::Rgtta)?;
        Ok(cfg)
    }

    /// Defaults for `kind` with the file's `[policy]` overrides applied.
    pub fn policy_for(&self, kind: PolicyKind) -> anyhow::Result<PolicyConfig> {
        apply_overrides(PolicyConfig::for_kind(kind), &self.policy)
    }
}

/// Replace fields of `base` with the entries of `overrides`.
pub fn apply_overrides(base: PolicyConfig, overrides: &toml::Table) -> anyhow::Result<PolicyConfig> {
    let mut table = toml::Table::try_from(&base).context("serialising policy defaults")?;
    for (k, v) in overrides {
        if !table.contains_key(k) {
            bail!("unknown policy field '{k}'");
        }
        table.insert(k.clone(), v.clone());
    }
    let cfg: PolicyConfig = toml::Value::Table(table)
        .try_into()
        .context("invalid policy override")?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_replace_fields() {
        let t: toml::Table = toml::from_str("tau = 0.9\nk_max = 30").unwrap();
        let cfg = apply_overrides(PolicyConfig::for_kind(PolicyKind::Tta), &t).unwrap();
        assert_eq!(cfg.tau, 0.9);
        assert_eq!(cfg.k_max, 30);
        assert_eq!(cfg.kind, PolicyKind::Tta);
        assert_eq!(cfg.gamma, PolicyConfig::default().gamma);
    }

    #[test]
    fn unknown_and_invalid_fields_fail() {
        let t: toml::Table = toml::from_str("taux = 0.9").unwrap();
        assert!(apply_overrides(PolicyConfig::default(), &t).is_err());
        let t: toml::Table = toml::from_str("k_max = 0").unwrap();
        assert!(apply_overrides(PolicyConfig::default(), &t).is_err());
    }
}
