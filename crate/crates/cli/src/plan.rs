//! Experiment grid shared by `bench` and `ablate`: flag parsing, dataset
//! resolution, parallel execution and the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use rgtta::data::HarnessConfig;
use rgtta::datagen::{DEFAULT_DATA_SEED, DEFAULT_LENGTH};
use rgtta::forecast::{Architecture, ModelSpec, TrainConfig};
use rgtta::harness::{pretrain, run_stream_from, RunOutcome, RunRecord};
use rgtta::policies::{PolicyConfig, PolicyKind};
use serde::Serialize;

use crate::config::FileConfig;
use crate::datasets::{DatasetEntry, Resolved, Resolver};
use crate::Failure;

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Model architectures (dlinear, gru_small).
    #[arg(long, num_args = 1.., default_values = ["gru_small", "dlinear"])]
    pub models: Vec<String>,
    /// Dataset names: synth_* scenarios, CSV paths, or names under --data-dir.
    #[arg(long, num_args = 1.., required = true)]
    pub datasets: Vec<String>,
    /// Forecast horizons (defaults to the config file, then 96).
    #[arg(long, num_args = 1..)]
    pub horizons: Option<Vec<usize>>,
    /// Number of seeds; runs seeds 0..N-1 (defaults to the config file, then 3).
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Output directory.
    #[arg(long, required = true)]
    pub out: PathBuf,
    /// TOML file with [harness], [train] and [policy] overrides.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory searched for `<name>.csv`.
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    /// Length of generated synthetic datasets.
    #[arg(long, default_value_t = DEFAULT_LENGTH)]
    pub synth_length: usize,
    /// Seed of generated synthetic datasets.
    #[arg(long, default_value_t = DEFAULT_DATA_SEED)]
    pub synth_seed: u64,
}

/// A fully resolved grid.
#[derive(Debug, Clone)]
pub struct Grid {
    pub file: FileConfig,
    pub models: Vec<ModelSpec>,
    pub datasets: Vec<Resolved>,
    pub horizons: Vec<usize>,
    pub seeds: Vec<u64>,
    pub harness: HarnessConfig,
    pub train: TrainConfig,
    pub out: PathBuf,
}

impl Grid {
    /// Parse and validate everything that can fail before a run starts.
    pub fn from_args(args: &GridArgs) -> Result<Self, Failure> {
        let file = FileConfig::load(args.config.as_deref()).map_err(Failure::usage)?;
        let models = args
            .models
            .iter()
            .map(|m| m.parse::<Architecture>().map(ModelSpec::for_arch))
            .collect::<Result<Vec<_>, _>>()
            .map_err(Failure::usage)?;
        let resolver = Resolver {
            data_dir: args.data_dir.clone(),
            synth_length: args.synth_length,
            synth_seed: args.synth_seed,
        };
        for d in &args.datasets {
            resolver.check(d).map_err(Failure::usage)?;
        }
        let mut harness = file.harness.clone().unwrap_or_default();
        if let Some(h) = &args.horizons {
            harness.horizons = h.clone();
        }
        if let Some(n) = args.seeds {
            if n == 0 {
                return Err(Failure::usage(anyhow::anyhow!("--seeds must be at least 1")));
            }
            harness.seeds = (0..n).collect();
        }
        harness.validate().map_err(Failure::usage)?;
        let datasets = args
            .datasets
            .iter()
            .map(|d| resolver.resolve(d))
            .collect::<anyhow::Result<Vec<_>>>()
            .map_err(Failure::runtime)?;
        Ok(Grid {
            train: file.train.clone().unwrap_or_default(),
            horizons: harness.horizons.clone(),
            seeds: harness.seeds.clone(),
            file,
            models,
            datasets,
            harness,
            out: args.out.clone(),
        })
    }

    /// (model, dataset, horizon, seed) groups in a fixed order.
    pub fn groups(&self) -> Vec<Group> {
        let mut out = Vec::new();
        for (mi, _) in self.models.iter().enumerate() {
            for (di, _) in self.datasets.iter().enumerate() {
                for &h in &self.horizons {
                    for &s in &self.seeds {
                        out.push(Group {
                            model: mi,
                            dataset: di,
                            horizon: h,
                            seed: s,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn dataset_entries(&self) -> Vec<DatasetEntry> {
        self.datasets.iter().map(|d| d.entry.clone()).collect()
    }

    pub fn prepare_out(&self) -> Result<(), Failure> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))
            .map_err(Failure::runtime)?;
        let log = self.out.join("runs.jsonl");
        if log.exists() {
            fs::remove_file(&log).map_err(Failure::runtime)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Group {
    pub model: usize,
    pub dataset: usize,
    pub horizon: usize,
    pub seed: u64,
}

/// One policy run inside a group.
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Caller-defined label (the policy name or the swept value).
    pub label: String,
    pub records: Vec<RunRecord>,
    pub error: Option<String>,
}

/// Run every group of `grid` on a worker pool. `policies` returns the labelled
/// policy configurations to run for a model; they share one pretrained model.
pub fn execute(
    grid: &Grid,
    policies: impl Fn(&ModelSpec) -> Vec<(String, PolicyConfig)> + Sync,
) -> Result<Vec<RunResult>, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(Failure::runtime)?;
    let groups = grid.groups();
    let total = groups.len();
    let results: Vec<Vec<RunResult>> = pool.install(|| {
        groups
            .par_iter()
            .enumerate()
            .map(|(i, g)| {
                let out = run_group(grid, g, &policies);
                log::info!(
                    "group {}/{total} done: {} {} H={} seed {}",
                    i + 1,
                    grid.models[g.model].arch,
                    grid.datasets[g.dataset].dataset.name,
                    g.horizon,
                    g.seed
                );
                out
            })
            .collect()
    });
    Ok(results.into_iter().flatten().collect())
}

fn run_group(
    grid: &Grid,
    g: &Group,
    policies: &impl Fn(&ModelSpec) -> Vec<(String, PolicyConfig)>,
) -> Vec<RunResult> {
    let model = &grid.models[g.model];
    let dataset = &grid.datasets[g.dataset].dataset;
    let runs = policies(model);
    let pre = match pretrain(dataset, model, &grid.harness, g.horizon, g.seed, &grid.train) {
        Ok(p) => p,
        Err(e) => {
            let msg = format!(
                "pretraining {} on {} (H={}, seed {}) failed: {e}",
                model.arch, dataset.name, g.horizon, g.seed
            );
            log::error!("{msg}");
            return runs
                .into_iter()
                .map(|(label, _)| RunResult {
                    label,
                    records: Vec::new(),
                    error: Some(msg.clone()),
                })
                .collect();
        }
    };
    runs.into_iter()
        .map(|(label, policy)| {
            let outcome = run_stream_from(dataset, &pre, &policy, g.horizon, g.seed, &grid.harness, &grid.train)
                .unwrap_or_else(|e| RunOutcome {
                    records: Vec::new(),
                    error: Some(format!("{} on {}: {e}", policy.kind, dataset.name)),
                });
            RunResult {
                label,
                records: outcome.records,
                error: outcome.error,
            }
        })
        .collect()
}

/// Worker threads: `RG_THREADS` when set, otherwise one per logical core.
pub fn thread_count() -> usize {
    std::env::var("RG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Parse policy names, rejecting unknown ones.
pub fn parse_policies(names: &[String]) -> Result<Vec<PolicyKind>, Failure> {
    names
        .iter()
        .map(|p| p.parse::<PolicyKind>().map_err(Failure::usage))
        .collect()
}

/// Everything needed to re-run an experiment.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub harness: &'a HarnessConfig,
    pub train: &'a TrainConfig,
    pub models: &'a [ModelSpec],
    pub horizons: &'a [usize],
    pub seeds: &'a [u64],
    pub datasets: Vec<DatasetEntry>,
    pub policies: Vec<PolicyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<serde_json::Value>,
    pub runs: usize,
    pub records: usize,
    pub skipped: Vec<String>,
    pub aborted: Vec<String>,
}

impl<'a> Manifest<'a> {
    pub fn new(grid: &'a Grid) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: std::env::args().collect(),
            harness: &grid.harness,
            train: &grid.train,
            models: &grid.models,
            horizons: &grid.horizons,
            seeds: &grid.seeds,
            datasets: grid.dataset_entries(),
            policies: Vec::new(),
            ablation: None,
            runs: 0,
            records: 0,
            skipped: Vec::new(),
            aborted: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(self).map_err(Failure::runtime)?;
        fs::write(dir.join("manifest.json"), text + "\n").map_err(Failure::runtime)
    }
}
