//! `gen-data`: write synthetic scenarios as `date,OT` CSV files.

use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use rgtta::datagen::{generate, write_csv, ScenarioKind, ScenarioSpec, DEFAULT_DATA_SEED, DEFAULT_LENGTH};
use rgtta::harness::dataset_digest;
use serde::Serialize;

use crate::{CmdResult, Failure};

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    /// Scenario names (with or without the synth_ prefix), or `all`.
    #[arg(long, num_args = 1.., default_values = ["all"])]
    pub scenarios: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_LENGTH)]
    pub length: usize,
    #[arg(long, default_value_t = DEFAULT_DATA_SEED)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, required = true)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Entry {
    file: String,
    sha256: String,
    spec: ScenarioSpec,
}

pub fn run(args: GenDataArgs) -> CmdResult {
    let kinds: Vec<ScenarioKind> = if args.scenarios.iter().any(|s| s == "all") {
        ScenarioKind::ALL.to_vec()
    } else {
        args.scenarios
            .iter()
            .map(|s| s.parse::<ScenarioKind>())
            .collect::<Result<_, _>>()
            .map_err(Failure::usage)?
    };
    let specs: Vec<ScenarioSpec> = kinds.iter().map(|&k| ScenarioSpec::new(k, args.length, args.seed)).collect();
    for s in &specs {
        s.validate().map_err(Failure::usage)?;
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(Failure::runtime)?;
    let mut entries = Vec::new();
    for spec in specs {
        let d = generate(&spec).map_err(Failure::runtime)?;
        let file = format!("{}.csv", d.name);
        write_csv(&d, args.out.join(&file)).map_err(Failure::runtime)?;
        log::info!("wrote {file} ({} rows)", d.len());
        entries.push(Entry {
            file,
            sha256: dataset_digest(&d),
            spec,
        });
    }
    let text = serde_json::to_string_pretty(&entries).map_err(Failure::runtime)?;
    fs::write(args.out.join("manifest.json"), text + "\n").map_err(Failure::runtime)
}
