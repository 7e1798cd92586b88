//! Statistical comparison of policies and checks of the convergence
//! argument behind the step budget.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size for exact Wilcoxon enumeration.
pub const WILCOXON_EXACT_MAX: usize = 25;
/// Minimum number of non-zero differences for a Wilcoxon test.
pub const WILCOXON_MIN_PAIRS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    /// Differences tend to be negative.
    Less,
    /// Differences tend to be positive.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub statistic: f64,
    pub p_value: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub method: WilcoxonMethod,
}

/// Ranks (1-based) of `xs` in ascending order; ties get their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Wilcoxon signed-rank test on paired differences. Zero differences are
/// dropped. Small samples use the exact null distribution of the positive
/// rank sum (ties handled by enumerating doubled average ranks); larger
/// ones use the tie-corrected normal approximation with continuity
/// correction.
pub fn wilcoxon_signed_rank(diffs: &[f64], alternative: Alternative) -> Result<WilcoxonResult> {
    if let Some(i) = diffs.iter().position(|d| !d.is_finite()) {
        return Err(Error::NonFinite {
            context: "wilcoxon differences",
            index: i,
        });
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nz.len();
    if n < WILCOXON_MIN_PAIRS {
        return Err(Error::Stats(format!(
            "wilcoxon needs at least {WILCOXON_MIN_PAIRS} non-zero differences, got {n}"
        )));
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= WILCOXON_EXACT_MAX {
        let (p_less, p_greater) = exact_tails(&ranks, w_plus);
        let p = match alternative {
            Alternative::Less => p_less,
            Alternative::Greater => p_greater,
            Alternative::TwoSided => (2.0 * p_less.min(p_greater)).min(1.0),
        };
        return Ok(WilcoxonResult {
            statistic: w_plus,
            p_value: p,
            n,
            method: WilcoxonMethod::Exact,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_sizes(&abs).iter().map(|&t| t * t * t - t).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = if var <= 0.0 {
        1.0
    } else {
        let sd = var.sqrt();
        match alternative {
            Alternative::Less => normal.cdf((w_plus - mean + 0.5) / sd),
            Alternative::Greater => normal.sf((w_plus - mean - 0.5) / sd),
            Alternative::TwoSided => {
                let z = ((w_plus - mean).abs() - 0.5).max(0.0) / sd;
                (2.0 * normal.sf(z)).min(1.0)
            }
        }
    };
    Ok(WilcoxonResult {
        statistic: w_plus,
        p_value: p,
        n,
        method: WilcoxonMethod::Normal,
    })
}

fn tie_sizes(xs: &[f64]) -> Vec<f64> {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let j = s[i..].iter().take_while(|&&x| x == s[i]).count();
        if j > 1 {
            out.push(j as f64);
        }
        i += j;
    }
    out
}

/// P(W+ <= w) and P(W+ >= w) under the null. Average ranks are multiples of
/// one half, so the DP runs over doubled ranks.
fn exact_tails(ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all: f64 = counts.iter().sum();
    let w = (2.0 * w_plus).round() as usize;
    let le: f64 = counts[..=w].iter().sum();
    let ge: f64 = counts[w..].iter().sum();
    (le / all, ge / all)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub p_value: f64,
    /// Mean rank of each column; rank 1 is the smallest value in a row.
    pub average_ranks: Vec<f64>,
    pub n: usize,
    pub k: usize,
}

/// Friedman test over `rows` (configurations) × columns (policies).
pub fn friedman(rows: &[Vec<f64>]) -> Result<FriedmanResult> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::Stats(format!("friedman needs at least 2 rows and 2 columns, got {n}×{k}")));
    }
    let mut sums = vec![0.0; k];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != k {
            return Err(Error::Stats(format!("row {i} has {} columns, expected {k}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Stats(format!("row {i} holds a non-finite value")));
        }
        for (s, r) in sums.iter_mut().zip(average_ranks(row)) {
            *s += r;
        }
    }
    let average_ranks: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    friedman_from_ranks(&average_ranks, n).map(|(chi2, p_value)| FriedmanResult {
        chi2,
        p_value,
        average_ranks,
        n,
        k,
    })
}

/// Friedman statistic and p-value from the column mean ranks of `n` rows.
pub fn friedman_from_ranks(average_ranks: &[f64], n: usize) -> Result<(f64, f64)> {
    let k = average_ranks.len();
    if n < 2 || k < 2 {
        return Err(Error::Stats("friedman needs n >= 2 and k >= 2".into()));
    }
    let (kf, nf) = (k as f64, n as f64);
    let sum_sq: f64 = average_ranks.iter().map(|r| r * r).sum();
    let chi2 = (12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0)).max(0.0);
    let dist = ChiSquared::new(kf - 1.0).map_err(|e| Error::Stats(e.to_string()))?;
    Ok((chi2, dist.sf(chi2)))
}

/// Studentized-range critical values divided by sqrt(2) for k = 2..=10
/// (Demšar 2006, Table 5).
const Q_05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_10: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

/// Nemenyi critical value for `k` groups at `alpha` (0.05 or 0.10).
pub fn nemenyi_q(k: usize, alpha: f64) -> Result<f64> {
    if !(2..=10).contains(&k) {
        return Err(Error::Stats(format!("nemenyi q is tabulated for k in 2..=10, got {k}")));
    }
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(Error::Stats(format!("nemenyi q is tabulated for alpha 0.05 and 0.10, got {alpha}")));
    };
    Ok(table[k - 2])
}

/// Critical difference of mean ranks: `q · sqrt(k(k+1) / 6N)`.
pub fn nemenyi_cd(k: usize, n: usize, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Stats("nemenyi needs n >= 1".into()));
    }
    let q = nemenyi_q(k, alpha)?;
    let kf = k as f64;
    Ok(q * (kf * (kf + 1.0) / (6.0 * n as f64)).sqrt())
}

/// Per-test threshold for `m` comparisons.
pub fn bonferroni(alpha: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Stats("bonferroni needs at least one comparison".into()));
    }
    Ok(alpha / m as f64)
}

/// One paired comparison of a candidate against a baseline over
/// configurations (lower is better).
#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub n: usize,
    /// Configurations where the candidate is strictly lower.
    pub wins: usize,
    /// Mean of `100 · (baseline − candidate) / baseline`.
    pub mean_improvement_pct: f64,
    /// One-sided Wilcoxon p-value for "candidate lower"; `None` when too few
    /// non-zero differences exist.
    pub p_value: Option<f64>,
    pub significant: bool,
}

pub fn paired_comparison(candidate: &[f64], baseline: &[f64], threshold: f64) -> Result<PairedComparison> {
    if candidate.len() != baseline.len() || candidate.is_empty() {
        return Err(Error::Stats(format!(
            "paired comparison needs equal non-empty samples, got {} and {}",
            candidate.len(),
            baseline.len()
        )));
    }
    let diffs: Vec<f64> = candidate.iter().zip(baseline).map(|(c, b)| c - b).collect();
    let wins = diffs.iter().filter(|d| **d < 0.0).count();
    let pct: Vec<f64> = candidate
        .iter()
        .zip(baseline)
        .filter(|(_, b)| **b != 0.0)
        .map(|(c, b)| 100.0 * (b - c) / b)
        .collect();
    let mean_improvement_pct = if pct.is_empty() { 0.0 } else { pct.iter().sum::<f64>() / pct.len() as f64 };
    let p_value = match wilcoxon_signed_rank(&diffs, Alternative::Less) {
        Ok(r) => Some(r.p_value),
        Err(Error::Stats(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(PairedComparison {
        n: diffs.len(),
        wins,
        mean_improvement_pct,
        p_value,
        significant: p_value.is_some_and(|p| p < threshold),
    })
}

/// Outcome of gradient descent on a diagonal quadratic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdContraction {
    /// Geometric-mean per-step contraction of the slowest eigendirection.
    pub rate: f64,
    /// Geometric-mean per-step contraction of the full error norm.
    pub norm_rate: f64,
    /// `(κ − 1) / (κ + 1)`.
    pub bound: f64,
}

/// Run `steps` gradient-descent steps at `α = 2/(μ + L)` on
/// `½ Σ λᵢ (φᵢ − φ*ᵢ)²` with eigenvalues spread over `[1, κ]`.
pub fn gd_contraction_check(kappa: f64, steps: usize) -> Result<GdContraction> {
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(Error::Stats(format!("condition number must be >= 1, got {kappa}")));
    }
    if steps == 0 {
        return Err(Error::Stats("need at least one step".into()));
    }
    const DIMS: usize = 8;
    let (mu, l) = (1.0, kappa);
    let lambdas: Vec<f64> = (0..DIMS).map(|i| mu + (l - mu) * i as f64 / (DIMS - 1) as f64).collect();
    // Minimiser at the origin keeps the error free of cancellation.
    let target = vec![0.0; DIMS];
    let start: Vec<f64> = (0..DIMS).map(|i| 1.0 + 0.25 * i as f64).collect();
    let alpha = 2.0 / (mu + l);

    let mut phi = start.clone();
    for _ in 0..steps {
        for ((p, lam), t) in phi.iter_mut().zip(&lambdas).zip(&target) {
            *p -= alpha * lam * (*p - t);
        }
    }
    let k = steps as f64;
    let err = |v: &[f64]| -> Vec<f64> { v.iter().zip(&target).map(|(p, t)| p - t).collect() };
    let (e0, ek) = (err(&start), err(&phi));
    let rate = e0
        .iter()
        .zip(&ek)
        .map(|(a, b)| (b.abs() / a.abs()).powf(1.0 / k))
        .fold(0.0, f64::max);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(GdContraction {
        rate,
        norm_rate: (norm(&ek) / norm(&e0)).powf(1.0 / k),
        bound: (kappa - 1.0) / (kappa + 1.0),
    })
}

/// Extra steps needed from a cold start relative to a warm start whose
/// initial error is a fraction `1 − s` of the cold one, at contraction `ρ`:
/// `ln(1 − s) / ln ρ`.
pub fn step_savings(similarity: f64, rho: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&similarity) {
        return Err(Error::Stats(format!("similarity must be in [0, 1), got {similarity}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Stats(format!("contraction rate must be in (0, 1), got {rho}")));
    }
    Ok((1.0 - similarity).ln() / rho.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// P-values by enumerating every sign assignment of the ranks.
    fn brute_force(diffs: &[f64]) -> (f64, f64) {
        let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
        let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
        let ranks = average_ranks(&abs);
        let obs: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        let n = ranks.len();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if w <= obs + 1e-9 {
                le += 1;
            }
            if w >= obs - 1e-9 {
                ge += 1;
            }
        }
        let total = (1u64 << n) as f64;
        (le as f64 / total, ge as f64 / total)
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn all_negative_ten() {
        let d: Vec<f64> = (1..=10).map(|i| -(i as f64)).collect();
        let r = wilcoxon_signed_rank(&d, Alternative::Less).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0 / 1024.0).abs() < 1e-15);
        assert_eq!(r.method, WilcoxonMethod::Exact);
    }

    #[test]
    fn symmetric_null() {
        let d = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 2.0, -2.0];
        let r = wilcoxon_signed_rank(&d, Alternative::TwoSided).unwrap();
        assert!(r.p_value > 0.99, "{}", r.p_value);
    }

    #[test]
    fn eight_pair_textbook_case() {
        // before/after pairs with one zero-free set of differences
        let before = [125.0, 115.0, 130.0, 140.0, 140.0, 115.0, 140.0, 125.0];
        let after = [110.0, 122.0, 125.0, 120.0, 140.5, 124.0, 123.0, 137.0];
        let d: Vec<f64> = before.iter().zip(&after).map(|(b, a)| b - a).collect();
        let (le, ge) = brute_force(&d);
        let less = wilcoxon_signed_rank(&d, Alternative::Less).unwrap();
        let greater = wilcoxon_signed_rank(&d, Alternative::Greater).unwrap();
        let two = wilcoxon_signed_rank(&d, Alternative::TwoSided).unwrap();
        assert_eq!(less.p_value, le);
        assert_eq!(greater.p_value, ge);
        assert_eq!(two.p_value, (2.0 * le.min(ge)).min(1.0));
    }

    #[test]
    fn zeros_dropped_and_minimum_enforced() {
        assert!(wilcoxon_signed_rank(&[1.0, -2.0, 3.0, 0.0, 0.0, 4.0, 5.0], Alternative::TwoSided).is_err());
        let r = wilcoxon_signed_rank(&[1.0, -2.0, 3.0, 0.0, 6.0, 4.0, 5.0], Alternative::TwoSided).unwrap();
        assert_eq!(r.n, 6);
        assert!(wilcoxon_signed_rank(&[f64::NAN; 8], Alternative::Less).is_err());
    }

    #[test]
    fn normal_approximation_tracks_exact_tail() {
        let d: Vec<f64> = (1..=30).map(|i| if i % 3 == 0 { i as f64 } else { -(i as f64) }).collect();
        let r = wilcoxon_signed_rank(&d, Alternative::Less).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Normal);
        let ranks: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let (exact_less, _) = exact_tails(&ranks, r.statistic);
        assert!((r.p_value - exact_less).abs() < 2e-3, "{} vs {}", r.p_value, exact_less);
        assert_eq!(wilcoxon_signed_rank(&d[..25], Alternative::Less).unwrap().method, WilcoxonMethod::Exact);
    }

    proptest! {
        #[test]
        fn exact_matches_enumeration(
            raw in proptest::collection::vec(-5i32..=5, 6..=12),
        ) {
            let d: Vec<f64> = raw.iter().map(|&x| x as f64).collect();
            prop_assume!(d.iter().filter(|x| **x != 0.0).count() >= 6);
            let (le, ge) = brute_force(&d);
            let less = wilcoxon_signed_rank(&d, Alternative::Less).unwrap().p_value;
            let greater = wilcoxon_signed_rank(&d, Alternative::Greater).unwrap().p_value;
            prop_assert!((less - le).abs() < 1e-12);
            prop_assert!((greater - ge).abs() < 1e-12);
        }

        #[test]
        fn friedman_is_rank_based(
            rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 4), 3..8),
        ) {
            let base = friedman(&rows).unwrap();
            let transformed: Vec<Vec<f64>> =
                rows.iter().map(|r| r.iter().map(|x| x.exp() * 3.0 + 1.0).collect()).collect();
            let t = friedman(&transformed).unwrap();
            prop_assert!((base.chi2 - t.chi2).abs() < 1e-9);
        }
    }

    #[test]
    fn friedman_perfect_agreement_k3_n4() {
        // rank means 1, 2, 3: 12·4/(3·4) · (14 − 12) = 8
        let rows = vec![vec![1.0, 2.0, 3.0]; 4];
        let f = friedman(&rows).unwrap();
        assert!((f.chi2 - 8.0).abs() < 1e-12);
        assert_eq!(f.average_ranks, vec![1.0, 2.0, 3.0]);
        // chi-square sf(8, 2 dof) = e^{-4}
        assert!((f.p_value - (-4.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn friedman_all_tied() {
        let f = friedman(&vec![vec![5.0; 4]; 6]).unwrap();
        assert_eq!(f.chi2, 0.0);
        assert!((f.p_value - 1.0).abs() < 1e-12);
        assert_eq!(f.average_ranks, vec![2.5; 4]);
    }

    #[test]
    fn friedman_degenerate() {
        assert!(friedman(&[vec![1.0, 2.0]]).is_err());
        assert!(friedman(&[vec![1.0], vec![2.0]]).is_err());
        assert!(friedman(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn friedman_reported_ranks() {
        let ranks = [2.46, 2.51, 2.98, 4.02, 4.34, 4.69];
        let (chi2, p) = friedman_from_ranks(&ranks, 224).unwrap();
        assert!((chi2 - 301.95).abs() / 301.95 < 0.01, "{chi2}");
        assert!(p < 1e-60);
    }

    #[test]
    fn nemenyi_values() {
        let cd = nemenyi_cd(6, 224, 0.05).unwrap();
        assert!((cd - 0.504).abs() < 5e-4, "{cd}");
        let quarter = nemenyi_cd(6, 896, 0.05).unwrap();
        assert!((quarter - cd / 2.0).abs() < 1e-12);
        assert!((nemenyi_cd(2, 50, 0.05).unwrap() - 1.960 * (1.0f64 / 50.0).sqrt()).abs() < 1e-12);
        assert!(nemenyi_cd(11, 10, 0.05).is_err());
        assert!(nemenyi_cd(1, 10, 0.05).is_err());
        assert!(nemenyi_cd(4, 10, 0.01).is_err());
    }

    #[test]
    fn nemenyi_closed_form_every_entry() {
        for k in 2..=10 {
            for (alpha, table) in [(0.05, &Q_05), (0.10, &Q_10)] {
                let kf = k as f64;
                let expect = table[k - 2] * (kf * (kf + 1.0) / 60.0).sqrt();
                assert!((nemenyi_cd(k, 10, alpha).unwrap() - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bonferroni_threshold() {
        assert_eq!(bonferroni(0.05, 3).unwrap(), 0.05 / 3.0);
        assert!(bonferroni(0.05, 0).is_err());
    }

    #[test]
    fn paired_candidate_always_better() {
        let base: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let cand: Vec<f64> = base.iter().map(|b| b * 0.9).collect();
        let c = paired_comparison(&cand, &base, 0.05 / 3.0).unwrap();
        assert_eq!(c.wins, 10);
        assert!((c.mean_improvement_pct - 10.0).abs() < 1e-9);
        assert!((c.p_value.unwrap() - 1.0 / 1024.0).abs() < 1e-15);
        assert!(c.significant);
        let few = paired_comparison(&cand[..3], &base[..3], 0.05).unwrap();
        assert_eq!(few.p_value, None);
        assert!(!few.significant);
    }

    #[test]
    fn isotropic_converges_in_one_step() {
        let g = gd_contraction_check(1.0, 1).unwrap();
        assert_eq!(g.rate, 0.0);
        assert_eq!(g.bound, 0.0);
    }

    #[test]
    fn kappa_39_contracts_at_095() {
        let g = gd_contraction_check(39.0, 25).unwrap();
        assert!((g.bound - 0.95).abs() < 1e-12);
        assert!((g.rate - 0.95).abs() < 1e-6, "{}", g.rate);
        assert!(g.norm_rate <= g.bound + 1e-6);
    }

    proptest! {
        #[test]
        fn contraction_within_bound(kappa in 1.0f64..500.0, steps in 1usize..60) {
            let g = gd_contraction_check(kappa, steps).unwrap();
            prop_assert!(g.rate <= g.bound + 1e-6);
            prop_assert!(g.norm_rate <= g.bound + 1e-6);
        }
    }

    #[test]
    fn step_savings_value() {
        let dk = step_savings(0.85, 0.95).unwrap();
        assert!((dk - 36.99).abs() < 0.01, "{dk}");
        assert_eq!(step_savings(0.0, 0.5).unwrap(), 0.0);
        assert!(step_savings(1.0, 0.5).is_err());
        assert!(step_savings(0.5, 1.0).is_err());
    }
}
