//! `bench`: the full policy × model × dataset × horizon × seed grid.

use anyhow::anyhow;
use clap::Args;
use rgtta::forecast::Architecture;
use rgtta::harness::{aggregate, seed_means, write_run_log, write_summary_csv, RunRecord};
use rgtta::policies::{PolicyConfig, PolicyKind};

use crate::plan::{execute, parse_policies, Grid, GridArgs, Manifest};
use crate::{CmdResult, Failure};

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Policies: tta ewc dynatta rgtta rgtta_ewc rgtta_dynatta retrain.
    #[arg(long, num_args = 1.., default_values = ["tta", "ewc", "dynatta", "rgtta", "rgtta_ewc", "rgtta_dynatta"])]
    pub policies: Vec<String>,
    #[command(flatten)]
    pub grid: GridArgs,
}

pub fn run(args: BenchArgs) -> CmdResult {
    let kinds = parse_policies(&args.policies)?;
    let grid = Grid::from_args(&args.grid)?;
    let configs: Vec<PolicyConfig> = kinds
        .iter()
        .map(|&k| grid.file.policy_for(k))
        .collect::<anyhow::Result<_>>()
        .map_err(Failure::usage)?;
    grid.prepare_out()?;

    let mut manifest = Manifest::new(&grid);
    manifest.policies = configs.clone();
    if kinds.contains(&PolicyKind::Retrain) && grid.models.iter().any(|m| m.arch != Architecture::DLinear) {
        manifest
            .skipped
            .push("retrain runs on DLinear only; skipped for other models".to_string());
        log::warn!("retrain supports DLinear only; skipping it for other models");
    }

    let results = execute(&grid, |model| {
        configs
            .iter()
            .filter(|c| c.kind != PolicyKind::Retrain || model.arch == Architecture::DLinear)
            .map(|c| (c.kind.name().to_string(), c.clone()))
            .collect()
    })?;

    let records: Vec<RunRecord> = results.iter().flat_map(|r| r.records.iter().cloned()).collect();
    manifest.runs = results.len();
    manifest.records = records.len();
    manifest.aborted = results.iter().filter_map(|r| r.error.clone()).collect();

    write_run_log(grid.out.join("runs.jsonl"), &records).map_err(Failure::runtime)?;
    if !records.is_empty() {
        let summary = aggregate(&records).map_err(Failure::runtime)?;
        write_summary_csv(grid.out.join("summary.csv"), &summary).map_err(Failure::runtime)?;
        write_timing(&grid.out.join("timing.csv"), &records)?;
    }
    manifest.write(&grid.out)?;

    log::info!("{} runs, {} records written to {}", manifest.runs, manifest.records, grid.out.display());
    if !manifest.aborted.is_empty() {
        for a in &manifest.aborted {
            eprintln!("aborted: {a}");
        }
        return Err(Failure::runtime(anyhow!("{} of {} runs aborted", manifest.aborted.len(), manifest.runs)));
    }
    Ok(())
}

/// Per-run adaptation time, kept apart from the deterministic summary.
fn write_timing(path: &std::path::Path, records: &[RunRecord]) -> CmdResult {
    let rows = seed_means(records).map_err(Failure::runtime)?;
    let mut w = csv::Writer::from_path(path).map_err(Failure::runtime)?;
    w.write_record(["policy", "model", "dataset", "horizon", "seed", "adapt_time_seconds", "mean_steps"])
        .map_err(Failure::runtime)?;
    for r in rows {
        w.write_record([
            r.policy.name().to_string(),
            r.model.name().to_string(),
            r.dataset,
            r.horizon.to_string(),
            r.seed.to_string(),
            format!("{:.6}", r.adapt_time_seconds),
            r.mean_steps.to_string(),
        ])
        .map_err(Failure::runtime)?;
    }
    w.flush().map_err(Failure::runtime)
}
