//! `ablate`: one-factor sweeps of a regime-guided policy.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::{anyhow, bail};
use clap::{Args, ValueEnum};
use rgtta::harness::{aggregate, write_summary_csv, RunRecord};
use rgtta::policies::{PolicyConfig, PolicyKind};
use serde::Serialize;

use crate::plan::{execute, Grid, GridArgs, Manifest};
use crate::{CmdResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Similarity scaling of the learning rate.
    Gamma,
    /// Loss-ratio threshold of the checkpoint gate.
    LossGate,
    /// Regime memory capacity.
    MemoryCap,
    /// Similarity threshold of the checkpoint gate.
    CkptThreshold,
    /// Step budget: `fixed20` or `loss_driven`.
    EarlyStop,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::LossGate => "loss_gate",
            SweepParam::MemoryCap => "memory_cap",
            SweepParam::CkptThreshold => "ckpt_threshold",
            SweepParam::EarlyStop => "early_stop",
        }
    }

    /// The value of `base` that the sweep's deltas refer to.
    fn default_value(self, base: &PolicyConfig) -> String {
        match self {
            SweepParam::Gamma => base.gamma.to_string(),
            SweepParam::LossGate => base.gate_ratio.to_string(),
            SweepParam::MemoryCap => base.memory_cap.to_string(),
            SweepParam::CkptThreshold => base.tau.to_string(),
            SweepParam::EarlyStop => if base.early_stopping { "loss_driven" } else { "fixed20" }.to_string(),
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &PolicyConfig, value: &str) -> anyhow::Result<PolicyConfig> {
        let mut cfg = base.clone();
        let real = || value.parse::<f64>().map_err(|_| anyhow!("{}: '{value}' is not a number", self.name()));
        match self {
            SweepParam::Gamma => cfg.gamma = real()?,
            SweepParam::LossGate => cfg.gate_ratio = real()?,
            SweepParam::CkptThreshold => cfg.tau = real()?,
            SweepParam::MemoryCap => {
                cfg.memory_cap = value
                    .parse()
                    .map_err(|_| anyhow!("memory_cap: '{value}' is not a positive integer"))?
            }
            SweepParam::EarlyStop => match value {
                "fixed20" => {
                    cfg.early_stopping = false;
                    cfg.k_max = 20;
                }
                "loss_driven" => cfg.early_stopping = true,
                other => bail!("early_stop: '{other}' is neither fixed20 nor loss_driven"),
            },
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    /// Parameter to sweep; exactly one.
    #[arg(long, num_args = 1.., required = true)]
    pub param: Vec<SweepParam>,
    /// Values of the swept parameter.
    #[arg(long, num_args = 1.., required = true)]
    pub values: Vec<String>,
    /// Regime-guided policy under test.
    #[arg(long, default_value = "rgtta")]
    pub policy: String,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Serialize)]
struct AblationLine<'a> {
    parameter: &'static str,
    value: &'a str,
    #[serde(flatten)]
    record: &'a RunRecord,
}

pub fn run(args: AblateArgs) -> CmdResult {
    if args.param.len() != 1 {
        return Err(Failure::usage(anyhow!(
            "sweep exactly one parameter at a time, got {}",
            args.param.len()
        )));
    }
    let param = args.param[0];
    let kind: PolicyKind = args.policy.parse().map_err(Failure::usage)?;
    let grid = Grid::from_args(&args.grid)?;
    let base = grid.file.policy_for(kind).map_err(Failure::usage)?;
    let configs: Vec<(String, PolicyConfig)> = args
        .values
        .iter()
        .map(|v| param.apply(&base, v).map(|c| (v.clone(), c)))
        .collect::<anyhow::Result<_>>()
        .map_err(Failure::usage)?;
    grid.prepare_out()?;

    let results = execute(&grid, |_| configs.clone())?;

    let mut by_value: BTreeMap<&str, Vec<RunRecord>> = BTreeMap::new();
    let log = File::create(grid.out.join("runs.jsonl")).map_err(Failure::runtime)?;
    let mut log = BufWriter::new(log);
    for r in &results {
        for rec in &r.records {
            let line = AblationLine {
                parameter: param.name(),
                value: &r.label,
                record: rec,
            };
            serde_json::to_writer(&mut log, &line).map_err(Failure::runtime)?;
            log.write_all(b"\n").map_err(Failure::runtime)?;
        }
        by_value.entry(&r.label).or_default().extend(r.records.iter().cloned());
    }
    log.flush().map_err(Failure::runtime)?;

    let mut means = Vec::new();
    for (value, _) in &configs {
        let records = by_value.get(value.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if records.is_empty() {
            means.push((value.clone(), None));
            continue;
        }
        let summary = aggregate(records).map_err(Failure::runtime)?;
        let file = format!("summary_{}_{}.csv", param.name(), sanitize(value));
        write_summary_csv(grid.out.join(file), &summary).map_err(Failure::runtime)?;
        let mean = summary.iter().map(|s| s.mse).sum::<f64>() / summary.len() as f64;
        means.push((value.clone(), Some(mean)));
    }
    let default = param.default_value(&PolicyConfig::for_kind(kind));
    let reference = means
        .iter()
        .find(|(v, _)| same_value(v, &default))
        .and_then(|(_, m)| *m);
    if reference.is_none() {
        log::warn!("default value {default} is not in the sweep; deltas are left empty");
    }
    write_table(&grid.out.join("ablation.csv"), param, &means, reference)?;

    let aborted: Vec<String> = results.iter().filter_map(|r| r.error.clone()).collect();
    let mut manifest = Manifest::new(&grid);
    manifest.policies = configs.iter().map(|(_, c)| c.clone()).collect();
    manifest.ablation = Some(serde_json::json!({
        "parameter": param.name(),
        "values": args.values,
        "policy": kind.name(),
        "default": default,
    }));
    manifest.runs = results.len();
    manifest.records = results.iter().map(|r| r.records.len()).sum();
    manifest.aborted = aborted.clone();
    manifest.write(&grid.out)?;
    if !aborted.is_empty() {
        for a in &aborted {
            eprintln!("aborted: {a}");
        }
        return Err(Failure::runtime(anyhow!("{} of {} runs aborted", aborted.len(), results.len())));
    }
    Ok(())
}

fn same_value(a: &str, b: &str) -> bool {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn sanitize(v: &str) -> String {
    v.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

/// `parameter,value,mean_mse,delta_pct`, with the delta relative to the
/// default value's row.
fn write_table(
    path: &std::path::Path,
    param: SweepParam,
    means: &[(String, Option<f64>)],
    reference: Option<f64>,
) -> CmdResult {
    let mut w = csv::Writer::from_path(path).map_err(Failure::runtime)?;
    w.write_record(["parameter", "value", "mean_mse", "delta_pct"]).map_err(Failure::runtime)?;
    for (value, mean) in means {
        let delta = match (mean, reference) {
            (Some(m), Some(r)) if r != 0.0 => format!("{:.4}", 100.0 * (m - r) / r),
            _ => String::new(),
        };
        let mean = mean.map(|m| m.to_string()).unwrap_or_default();
        w.write_record([param.name(), value, &mean, &delta]).map_err(Failure::runtime)?;
    }
    w.flush().map_err(Failure::runtime)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_values_map_to_fields() {
        let base = PolicyConfig::default();
        assert_eq!(SweepParam::Gamma.apply(&base, "0").unwrap().gamma, 0.0);
        assert_eq!(SweepParam::LossGate.apply(&base, "0.5").unwrap().gate_ratio, 0.5);
        assert_eq!(SweepParam::MemoryCap.apply(&base, "1").unwrap().memory_cap, 1);
        assert_eq!(SweepParam::CkptThreshold.apply(&base, "0.9").unwrap().tau, 0.9);
        let fixed = SweepParam::EarlyStop.apply(&base, "fixed20").unwrap();
        assert!(!fixed.early_stopping);
        assert_eq!(fixed.k_max, 20);
        assert!(SweepParam::EarlyStop.apply(&base, "loss_driven").unwrap().early_stopping);
        assert!(SweepParam::EarlyStop.apply(&base, "sometimes").is_err());
        assert!(SweepParam::MemoryCap.apply(&base, "0").is_err());
        assert!(SweepParam::Gamma.apply(&base, "abc").is_err());
    }

    #[test]
    fn defaults_match_policy_defaults() {
        let base = PolicyConfig::default();
        assert_eq!(SweepParam::Gamma.default_value(&base), "0.67");
        assert_eq!(SweepParam::EarlyStop.default_value(&base), "loss_driven");
        assert!(same_value("0.670", "0.67"));
    }
}
