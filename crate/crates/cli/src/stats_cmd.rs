//! `stats`: statistical report over a summary CSV.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::Args;
use rgtta::harness::{read_summary_csv, win_counts, ConfigKey, SummaryRow};
use rgtta::policies::PolicyKind;
use rgtta::stats::{bonferroni, friedman, nemenyi_cd, paired_comparison};
use serde::Serialize;

use crate::{CmdResult, Failure};

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Summary CSV written by `bench`.
    #[arg(long, required = true)]
    pub summary: PathBuf,
    /// Output directory.
    #[arg(long, required = true)]
    pub out: PathBuf,
    /// Family-wise significance level (0.05 or 0.10 for the Nemenyi CD).
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

/// Regime-guided variants and the baselines they extend.
const PAIRS: [(PolicyKind, PolicyKind); 3] = [
    (PolicyKind::Rgtta, PolicyKind::Tta),
    (PolicyKind::RgttaEwc, PolicyKind::Ewc),
    (PolicyKind::RgttaDynatta, PolicyKind::Dynatta),
];

#[derive(Debug, Serialize)]
struct FriedmanReport {
    configurations: usize,
    policies: Vec<String>,
    average_ranks: Vec<f64>,
    chi2: f64,
    p_value: f64,
    alpha: f64,
    critical_difference: Option<f64>,
}

pub fn run(args: StatsArgs) -> CmdResult {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::usage(anyhow!("--alpha must lie in (0, 1)")));
    }
    let rows = read_summary_csv(&args.summary).map_err(Failure::usage)?;
    if rows.is_empty() {
        return Err(Failure::usage(anyhow!("{} holds no rows", args.summary.display())));
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(Failure::runtime)?;

    // Complete block: configurations that every policy in the file covers.
    let policies: Vec<PolicyKind> = rows.iter().map(|r| r.policy).collect::<BTreeSet<_>>().into_iter().collect();
    let mut table: BTreeMap<ConfigKey, BTreeMap<PolicyKind, f64>> = BTreeMap::new();
    for r in &rows {
        table.entry(r.key()).or_default().insert(r.policy, r.mse);
    }
    let complete: Vec<(&ConfigKey, Vec<f64>)> = table
        .iter()
        .filter(|(_, m)| m.len() == policies.len())
        .map(|(k, m)| (k, policies.iter().map(|p| m[p]).collect()))
        .collect();
    if complete.len() < table.len() {
        log::warn!(
            "{} of {} configurations lack some policy and are left out of the rank tests",
            table.len() - complete.len(),
            table.len()
        );
    }

    write_pairwise(&args, &table)?;
    write_wins(&args, &rows)?;

    let matrix: Vec<Vec<f64>> = complete.iter().map(|(_, v)| v.clone()).collect();
    match friedman(&matrix) {
        Ok(f) => {
            let cd = nemenyi_cd(policies.len(), f.n, args.alpha).ok();
            let report = FriedmanReport {
                configurations: f.n,
                policies: policies.iter().map(|p| p.name().to_string()).collect(),
                average_ranks: f.average_ranks.clone(),
                chi2: f.chi2,
                p_value: f.p_value,
                alpha: args.alpha,
                critical_difference: cd,
            };
            let text = serde_json::to_string_pretty(&report).map_err(Failure::runtime)?;
            fs::write(args.out.join("friedman.json"), text + "\n").map_err(Failure::runtime)?;
            let mut w = csv::Writer::from_path(args.out.join("cd_diagram.csv")).map_err(Failure::runtime)?;
            w.write_record(["policy", "mean_rank", "cd"]).map_err(Failure::runtime)?;
            for (p, r) in policies.iter().zip(&f.average_ranks) {
                let cd = cd.map(|c| c.to_string()).unwrap_or_default();
                w.write_record([p.name(), &r.to_string(), &cd]).map_err(Failure::runtime)?;
            }
            w.flush().map_err(Failure::runtime)?;
            println!(
                "friedman: chi2 = {:.3}, p = {:.3e}, N = {}, k = {}{}",
                f.chi2,
                f.p_value,
                f.n,
                f.k,
                cd.map(|c| format!(", CD = {c:.3}")).unwrap_or_default()
            );
        }
        Err(e) => log::warn!("friedman test skipped: {e}"),
    }
    Ok(())
}

fn write_pairwise(args: &StatsArgs, table: &BTreeMap<ConfigKey, BTreeMap<PolicyKind, f64>>) -> CmdResult {
    let present: Vec<_> = PAIRS
        .iter()
        .filter(|(a, b)| table.values().any(|m| m.contains_key(a) && m.contains_key(b)))
        .collect();
    let mut w = csv::Writer::from_path(args.out.join("pairwise.csv")).map_err(Failure::runtime)?;
    w.write_record([
        "candidate",
        "baseline",
        "n",
        "wins",
        "win_rate",
        "mean_improvement_pct",
        "p_value",
        "threshold",
        "significant",
    ])
    .map_err(Failure::runtime)?;
    if present.is_empty() {
        return w.flush().map_err(Failure::runtime);
    }
    let threshold = bonferroni(args.alpha, present.len()).map_err(Failure::runtime)?;
    for (cand, base) in present {
        let (c, b): (Vec<f64>, Vec<f64>) = table
            .values()
            .filter_map(|m| Some((*m.get(cand)?, *m.get(base)?)))
            .unzip();
        let r = paired_comparison(&c, &b, threshold).map_err(Failure::runtime)?;
        w.write_record([
            cand.name().to_string(),
            base.name().to_string(),
            r.n.to_string(),
            r.wins.to_string(),
            format!("{:.4}", r.wins as f64 / r.n as f64),
            format!("{:.4}", r.mean_improvement_pct),
            r.p_value.map(|p| format!("{p:.6e}")).unwrap_or_default(),
            format!("{threshold:.6}"),
            r.significant.to_string(),
        ])
        .map_err(Failure::runtime)?;
        println!(
            "{} vs {}: {}/{} wins, mean improvement {:.2}%, p = {}",
            cand,
            base,
            r.wins,
            r.n,
            r.mean_improvement_pct,
            r.p_value.map_or("n/a".to_string(), |p| format!("{p:.3e}"))
        );
    }
    w.flush().map_err(Failure::runtime)
}

fn write_wins(args: &StatsArgs, rows: &[SummaryRow]) -> CmdResult {
    let table = win_counts(rows);
    let mut w = csv::Writer::from_path(args.out.join("wins.csv")).map_err(Failure::runtime)?;
    w.write_record(["policy", "wins", "configurations"]).map_err(Failure::runtime)?;
    for (p, n) in &table.wins {
        w.write_record([p.name(), &n.to_string(), &table.configurations.to_string()])
            .map_err(Failure::runtime)?;
    }
    w.flush().map_err(Failure::runtime)
}
