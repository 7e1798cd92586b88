//! Summaries over run records: batch means per seed, seed means per
//! configuration, and win counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RunRecord;
use crate::error::{Error, Result};
use crate::forecast::Architecture;
use crate::policies::PolicyKind;

/// One experimental configuration; policies compete within it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigKey {
    pub model: Architecture,
    pub dataset: String,
    pub horizon: usize,
}

/// Means over the batches of one (policy, configuration, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMean {
    pub policy: PolicyKind,
    pub model: Architecture,
    pub dataset: String,
    pub horizon: usize,
    pub seed: u64,
    pub n_batches: usize,
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
    pub wmape: f64,
    pub direction_accuracy: f64,
    pub mean_steps: f64,
    pub load_rate: f64,
    /// Total adaptation time of the run.
    pub adapt_time_seconds: f64,
}

/// Seed-averaged summary of one policy on one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: PolicyKind,
    pub model: Architecture,
    pub dataset: String,
    pub horizon: usize,
    pub n_seeds: usize,
    pub n_batches: usize,
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
    pub wmape: f64,
    pub direction_accuracy: f64,
    pub mean_steps: f64,
    pub load_rate: f64,
}

impl SummaryRow {
    pub fn key(&self) -> ConfigKey {
        ConfigKey {
            model: self.model,
            dataset: self.dataset.clone(),
            horizon: self.horizon,
        }
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Batch means per (policy, configuration, seed). Records are sorted within
/// each group, so the result does not depend on input order.
pub fn seed_means(records: &[RunRecord]) -> Result<Vec<SeedMean>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("run records"));
    }
    let mut groups: BTreeMap<(ConfigKey, PolicyKind, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = ConfigKey {
            model: r.model,
            dataset: r.dataset.clone(),
            horizon: r.horizon,
        };
        groups.entry((key, r.policy, r.seed)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((key, policy, seed), mut rs)| {
            rs.sort_by(|a, b| a.batch.cmp(&b.batch).then(a.mse.total_cmp(&b.mse)));
            SeedMean {
                policy,
                model: key.model,
                dataset: key.dataset,
                horizon: key.horizon,
                seed,
                n_batches: rs.len(),
                mse: mean(rs.iter().map(|r| r.mse)),
                mae: mean(rs.iter().map(|r| r.mae)),
                rmse: mean(rs.iter().map(|r| r.rmse)),
                smape: mean(rs.iter().map(|r| r.smape)),
                wmape: mean(rs.iter().map(|r| r.wmape)),
                direction_accuracy: mean(rs.iter().map(|r| r.direction_accuracy)),
                mean_steps: mean(rs.iter().map(|r| r.report.steps_used as f64)),
                load_rate: mean(rs.iter().map(|r| if r.report.loaded_checkpoint { 1.0 } else { 0.0 })),
                adapt_time_seconds: rs.iter().map(|r| r.adapt_time_seconds).sum(),
            }
        })
        .collect())
}

/// Batch means, then seed means, per (policy, configuration). Rows are
/// ordered by configuration, then policy. Wall-clock time is left out so that
/// summaries of identical runs are identical.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    let per_seed = seed_means(records)?;
    let mut groups: BTreeMap<(ConfigKey, PolicyKind), Vec<&SeedMean>> = BTreeMap::new();
    for s in &per_seed {
        let key = ConfigKey {
            model: s.model,
            dataset: s.dataset.clone(),
            horizon: s.horizon,
        };
        groups.entry((key, s.policy)).or_default().push(s);
    }
    Ok(groups
        .into_iter()
        .map(|((key, policy), ss)| SummaryRow {
            policy,
            model: key.model,
            dataset: key.dataset,
            horizon: key.horizon,
            n_seeds: ss.len(),
            n_batches: ss.iter().map(|s| s.n_batches).sum(),
            mse: mean(ss.iter().map(|s| s.mse)),
            mae: mean(ss.iter().map(|s| s.mae)),
            rmse: mean(ss.iter().map(|s| s.rmse)),
            smape: mean(ss.iter().map(|s| s.smape)),
            wmape: mean(ss.iter().map(|s| s.wmape)),
            direction_accuracy: mean(ss.iter().map(|s| s.direction_accuracy)),
            mean_steps: mean(ss.iter().map(|s| s.mean_steps)),
            load_rate: mean(ss.iter().map(|s| s.load_rate)),
        })
        .collect())
}

/// Lowest-MSE counts per policy over configurations. Every policy tied at the
/// minimum is credited.
#[derive(Debug, Clone, PartialEq)]
pub struct WinTable {
    pub wins: BTreeMap<PolicyKind, usize>,
    pub configurations: usize,
}

impl WinTable {
    pub fn wins_of(&self, policy: PolicyKind) -> usize {
        self.wins.get(&policy).copied().unwrap_or(0)
    }
}

pub fn win_counts(rows: &[SummaryRow]) -> WinTable {
    let mut by_config: BTreeMap<ConfigKey, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        by_config.entry(r.key()).or_default().push(r);
    }
    let mut wins: BTreeMap<PolicyKind, usize> = rows.iter().map(|r| (r.policy, 0)).collect();
    for rs in by_config.values() {
        let best = rs.iter().map(|r| r.mse).fold(f64::INFINITY, f64::min);
        for r in rs.iter().filter(|r| r.mse == best) {
            *wins.entry(r.policy).or_default() += 1;
        }
    }
    WinTable {
        wins,
        configurations: by_config.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::AdaptReport;
    use proptest::prelude::*;

    fn report(steps: usize) -> AdaptReport {
        AdaptReport {
            steps_used: steps,
            lr_used: vec![1e-3; steps],
            loaded_checkpoint: false,
            sim: None,
            pre_loss: 1.0,
            ckpt_loss: None,
            step_losses: vec![1.0; steps],
            post_loss: 1.0,
            early_stopped: false,
            evicted_batch: None,
            loaded_from_batch: None,
        }
    }

    fn rec(policy: PolicyKind, dataset: &str, seed: u64, batch: usize, mse: f64) -> RunRecord {
        RunRecord {
            policy,
            model: Architecture::DLinear,
            dataset: dataset.into(),
            horizon: 96,
            seed,
            batch,
            batch_start: 0,
            batch_end: 0,
            mse,
            mae: mse.sqrt(),
            rmse: mse.sqrt(),
            smape: 0.0,
            wmape: 0.0,
            direction_accuracy: 0.5,
            adapt_time_seconds: 0.1,
            protocol_digest: String::new(),
            report: report(20),
        }
    }

    fn row(policy: PolicyKind, dataset: &str, mse: f64) -> SummaryRow {
        let r = aggregate(&[rec(policy, dataset, 0, 1, mse)]).unwrap();
        r[0].clone()
    }

    #[test]
    fn batch_then_seed_means() {
        let rs = vec![
            rec(PolicyKind::Tta, "a", 0, 1, 1.0),
            rec(PolicyKind::Tta, "a", 0, 2, 3.0),
            rec(PolicyKind::Tta, "a", 1, 1, 4.0),
        ];
        let s = aggregate(&rs).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].n_seeds, 2);
        assert_eq!(s[0].n_batches, 3);
        // seed 0 mean 2, seed 1 mean 4
        assert_eq!(s[0].mse, 3.0);
    }

    #[test]
    fn two_seeds_average() {
        let rs = vec![rec(PolicyKind::Tta, "a", 0, 1, 2.0), rec(PolicyKind::Tta, "a", 1, 1, 4.0)];
        assert_eq!(aggregate(&rs).unwrap()[0].mse, 3.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn dominating_policy_wins_everything() {
        let mut rows = Vec::new();
        for d in ["a", "b", "c"] {
            rows.push(row(PolicyKind::Rgtta, d, 0.5));
            rows.push(row(PolicyKind::Tta, d, 1.0));
        }
        let w = win_counts(&rows);
        assert_eq!(w.configurations, 3);
        assert_eq!(w.wins_of(PolicyKind::Rgtta), 3);
        assert_eq!(w.wins_of(PolicyKind::Tta), 0);
    }

    #[test]
    fn hand_counted_win_table() {
        // config a: tta 1.0, ewc 2.0, rgtta 1.0 -> tta and rgtta tie
        // config b: tta 3.0, ewc 1.5, rgtta 2.0 -> ewc
        let rows = vec![
            row(PolicyKind::Tta, "a", 1.0),
            row(PolicyKind::Ewc, "a", 2.0),
            row(PolicyKind::Rgtta, "a", 1.0),
            row(PolicyKind::Tta, "b", 3.0),
            row(PolicyKind::Ewc, "b", 1.5),
            row(PolicyKind::Rgtta, "b", 2.0),
        ];
        let w = win_counts(&rows);
        assert_eq!(w.wins_of(PolicyKind::Tta), 1);
        assert_eq!(w.wins_of(PolicyKind::Ewc), 1);
        assert_eq!(w.wins_of(PolicyKind::Rgtta), 1);
        assert_eq!(w.configurations, 2);
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            mses in proptest::collection::vec(0.0f64..100.0, 12),
            perm_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rs = Vec::new();
            for (i, &m) in mses.iter().enumerate() {
                let policy = if i % 2 == 0 { PolicyKind::Tta } else { PolicyKind::Rgtta };
                rs.push(rec(policy, "a", (i / 2 % 3) as u64, i / 6 + 1, m));
            }
            let base = aggregate(&rs).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed);
            rs.shuffle(&mut rng);
            prop_assert_eq!(aggregate(&rs).unwrap(), base);
        }
    }
}
