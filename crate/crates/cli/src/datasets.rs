//! Dataset name resolution: `synth_*` names are generated, anything else is
//! a CSV path or `<data-dir>/<name>.csv`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rgtta::data::TimeSeriesDataset;
use rgtta::datagen::{generate, load_csv, ScenarioKind, ScenarioSpec};
use rgtta::harness::dataset_digest;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic { spec: ScenarioSpec },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetEntry {
    pub name: String,
    pub rows: usize,
    pub season_length: usize,
    pub sha256: String,
    pub source: DatasetSource,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub dataset: TimeSeriesDataset,
    pub entry: DatasetEntry,
}

/// Options shared by every name in one invocation.
#[derive(Debug, Clone)]
pub struct Resolver {
    pub data_dir: PathBuf,
    pub synth_length: usize,
    pub synth_seed: u64,
}

impl Resolver {
    /// Check that `name` can be resolved without loading it.
    pub fn check(&self, name: &str) -> anyhow::Result<()> {
        if name.starts_with("synth") {
            name.parse::<ScenarioKind>()?;
            return Ok(());
        }
        let path = self.csv_path(name);
        if !path.is_file() {
            bail!("unknown dataset '{name}': not a synth_* scenario and {} does not exist", path.display());
        }
        Ok(())
    }

    fn csv_path(&self, name: &str) -> PathBuf {
        let direct = Path::new(name);
        if direct.extension().is_some_and(|e| e == "csv") {
            direct.to_path_buf()
        } else {
            self.data_dir.join(format!("{name}.csv"))
        }
    }

    pub fn resolve(&self, name: &str) -> anyhow::Result<Resolved> {
        let (dataset, source) = if name.starts_with("synth") {
            let kind: ScenarioKind = name.parse()?;
            let spec = ScenarioSpec::new(kind, self.synth_length, self.synth_seed);
            (generate(&spec)?, DatasetSource::Synthetic { spec })
        } else {
            let path = self.csv_path(name);
            let d = load_csv(&path, None, None).with_context(|| format!("loading dataset '{name}'"))?;
            (d, DatasetSource::Csv { path })
        };
        let entry = DatasetEntry {
            name: dataset.name.clone(),
            rows: dataset.len(),
            season_length: dataset.season_length,
            sha256: dataset_digest(&dataset),
            source,
        };
        Ok(Resolved { dataset, entry })
    }
}
