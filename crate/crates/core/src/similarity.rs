//! Regime fingerprints and the four-metric similarity ensemble.
//!
//! A batch is summarised by its mean, standard deviation, skewness, excess
//! kurtosis and lag-1 autocorrelation over the trailing `3 * season_length`
//! raw target values. The raw values are retained so the two-sample KS and
//! Wasserstein-1 components can be evaluated against stored regimes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard used by every normalised similarity.
pub const EPSILON: f64 = 1e-8;

/// Minimum number of samples needed to fingerprint a batch.
pub const MIN_FEATURE_SAMPLES: usize = 8;

/// Ensemble weights for (KS, Wasserstein, feature distance, variance ratio).
pub const ENSEMBLE_WEIGHTS: [f64; 4] = [0.3, 0.3, 0.2, 0.2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFeatures {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub lag1_autocorr: f64,
    pub raw_sample: Vec<f64>,
}

impl RegimeFeatures {
    pub fn vector(&self) -> [f64; 5] {
        [
            self.mean,
            self.std,
            self.skewness,
            self.excess_kurtosis,
            self.lag1_autocorr,
        ]
    }
}

/// Fingerprint the trailing `3 * season_length` samples of `series` (or all
/// of it when shorter).
pub fn extract_features(series: &[f64], season_length: usize) -> Result<RegimeFeatures> {
    let window = 3 * season_length;
    let tail = &series[series.len().saturating_sub(window)..];
    if tail.len() < MIN_FEATURE_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_FEATURE_SAMPLES} samples for regime features, got {}",
            tail.len()
        )));
    }
    if let Some(index) = tail.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "regime features",
            index,
        });
    }

    let n = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in tail {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let std = m2.sqrt();

    let (skewness, excess_kurtosis, lag1_autocorr) = if m2 > 0.0 {
        let num: f64 = tail
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum();
        let r1 = (num / (m2 * n)).clamp(-1.0, 1.0);
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0, r1)
    } else {
        (0.0, 0.0, 0.0)
    };

    Ok(RegimeFeatures {
        mean,
        std,
        skewness,
        excess_kurtosis,
        lag1_autocorr,
        raw_sample: tail.to_vec(),
    })
}

fn sorted_copy(xs: &[f64], what: &'static str) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Walk the merged support of two sorted samples, calling `f(x, next_x, F_a, F_b)`
/// after each distinct support point with both empirical CDFs evaluated at `x`.
fn sweep_ecdfs(a: &[f64], b: &[f64], mut f: impl FnMut(f64, Option<f64>, f64, f64)) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => Some(x.min(y)),
            (Some(&x), None) => Some(x),
            (None, Some(&y)) => Some(y),
            (None, None) => None,
        };
        f(x, next, i as f64 / na, j as f64 / nb);
    }
}

/// Two-sample Kolmogorov-Smirnov statistic `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted_copy(a, "ks sample a")?;
    let b = sorted_copy(b, "ks sample b")?;
    let mut d: f64 = 0.0;
    sweep_ecdfs(&a, &b, |_, _, fa, fb| d = d.max((fa - fb).abs()));
    Ok(d)
}

pub fn ks_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(1.0 - ks_statistic(a, b)?)
}

/// Exact 1-D Wasserstein-1 distance, `∫ |F_a - F_b| dx`, for samples of any size.
pub fn wasserstein_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted_copy(a, "wasserstein sample a")?;
    let b = sorted_copy(b, "wasserstein sample b")?;
    let mut total = 0.0;
    sweep_ecdfs(&a, &b, |x, next, fa, fb| {
        if let Some(next) = next {
            total += (fa - fb).abs() * (next - x);
        }
    });
    Ok(total)
}

fn peak_to_peak(xs: &[f64]) -> f64 {
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    hi - lo
}

/// `1 / (1 + W1 / max(ptp(a), ptp(b), ε))`.
pub fn wasserstein_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    let w = wasserstein_distance(a, b)?;
    let scale = peak_to_peak(a).max(peak_to_peak(b)).max(EPSILON);
    Ok(1.0 / (1.0 + w / scale))
}

fn norm(v: &[f64; 5]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `1 / (1 + ‖q − s‖ / ((‖q‖ + ‖s‖)/2 + ε))` over the 5-D fingerprints.
pub fn feature_similarity(q: &RegimeFeatures, s: &RegimeFeatures) -> f64 {
    feature_vector_similarity(&q.vector(), &s.vector())
}

pub fn feature_vector_similarity(q: &[f64; 5], s: &[f64; 5]) -> f64 {
    let diff: [f64; 5] = std::array::from_fn(|i| q[i] - s[i]);
    let scale = (norm(q) + norm(s)) / 2.0 + EPSILON;
    1.0 / (1.0 + norm(&diff) / scale)
}

/// Volatility ratio `min(σq, σs) / max(σq, σs, ε)`.
pub fn variance_ratio_similarity(sigma_q: f64, sigma_s: f64) -> f64 {
    let lo = sigma_q.min(sigma_s).max(0.0);
    let hi = sigma_q.max(sigma_s).max(EPSILON);
    lo / hi
}

/// The four component similarities in ensemble order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityBreakdown {
    pub ks: f64,
    pub wasserstein: f64,
    pub feature: f64,
    pub variance: f64,
}

impl SimilarityBreakdown {
    pub fn components(&self) -> [f64; 4] {
        [self.ks, self.wasserstein, self.feature, self.variance]
    }

    pub fn ensemble(&self) -> f64 {
        combine(self.components())
    }
}

/// Weighted ensemble of the four components, clamped to `[0, 1]`.
pub fn combine(components: [f64; 4]) -> f64 {
    components
        .iter()
        .zip(ENSEMBLE_WEIGHTS)
        .map(|(c, w)| c * w)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

pub fn similarity_breakdown(q: &RegimeFeatures, s: &RegimeFeatures) -> Result<SimilarityBreakdown> {
    Ok(SimilarityBreakdown {
        ks: ks_similarity(&q.raw_sample, &s.raw_sample)?,
        wasserstein: wasserstein_similarity(&q.raw_sample, &s.raw_sample)?,
        feature: feature_similarity(q, s),
        variance: variance_ratio_similarity(q.std, s.std),
    })
}

pub fn ensemble_similarity(q: &RegimeFeatures, s: &RegimeFeatures) -> Result<f64> {
    Ok(similarity_breakdown(q, s)?.ensemble())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Brute-force ECDF sup: evaluate both ECDFs at every merged point.
    fn ks_oracle(a: &[f64], b: &[f64]) -> f64 {
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        a.iter()
            .chain(b)
            .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
            .fold(0.0, f64::max)
    }

    /// Numerical quadrature of `|F_a − F_b|` on a fine grid.
    fn w1_quadrature(a: &[f64], b: &[f64]) -> f64 {
        let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let lo = a.iter().chain(b).cloned().fold(f64::INFINITY, f64::min);
        let hi = a.iter().chain(b).cloned().fold(f64::NEG_INFINITY, f64::max);
        let n = 200_000;
        let dx = (hi - lo) / n as f64;
        (0..n)
            .map(|k| {
                let x = lo + (k as f64 + 0.5) * dx;
                (ecdf(a, x) - ecdf(b, x)).abs() * dx
            })
            .sum()
    }

    fn features_of(xs: &[f64]) -> RegimeFeatures {
        extract_features(xs, xs.len()).unwrap()
    }

    #[test]
    fn features_of_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let f = extract_features(&xs, 3334).unwrap();
        assert_eq!(f.raw_sample.len(), 10_000);
        assert!(f.mean.abs() < 0.1);
        assert!((f.std - 1.0).abs() < 0.1);
        assert!(f.skewness.abs() < 0.1);
        assert!(f.excess_kurtosis.abs() < 0.1, "{}", f.excess_kurtosis);
    }

    #[test]
    fn features_of_constant_series() {
        let f = extract_features(&[5.0; 40], 10).unwrap();
        assert_eq!(f.vector(), [5.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn features_of_alternating_series() {
        let xs: Vec<f64> = (0..300).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let f = extract_features(&xs, 100).unwrap();
        // Σ(x_t x_{t+1}) / Σ x_t² = −299/300
        assert!((f.lag1_autocorr - (-299.0 / 300.0)).abs() < 1e-12);
    }

    #[test]
    fn features_use_trailing_window() {
        let mut xs = vec![100.0; 50];
        xs.extend((0..30).map(f64::from));
        let f = extract_features(&xs, 10).unwrap();
        assert_eq!(f.raw_sample.len(), 30);
        assert_eq!(f.raw_sample[0], 0.0);
    }

    #[test]
    fn features_need_eight_samples() {
        assert!(matches!(
            extract_features(&[1.0; 7], 24),
            Err(Error::InsufficientData(_))
        ));
        assert!(extract_features(&[1.0; 8], 24).is_ok());
    }

    #[test]
    fn ks_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(ks_similarity(&[0.0; 4], &[1.0; 4]).unwrap(), 0.0);
        let b = [2.0, 3.0, 4.0, 5.0];
        assert_eq!(ks_oracle(&a, &b), 0.25);
        assert_eq!(ks_similarity(&a, &b).unwrap(), 0.75);
        assert!(ks_similarity(&[], &a).is_err());
    }

    #[test]
    fn ks_matches_bruteforce_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let na = rng.gen_range(1..40);
            let nb = rng.gen_range(1..40);
            // Small integer support forces ties.
            let a: Vec<f64> = (0..na).map(|_| rng.gen_range(0..8) as f64).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(0..8) as f64).collect();
            assert!((ks_statistic(&a, &b).unwrap() - ks_oracle(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_distance(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_similarity(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(wasserstein_similarity(&[3.0], &[3.0]).unwrap(), 1.0);
    }

    #[test]
    fn wasserstein_equal_sizes_is_mean_sorted_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(1..60);
            let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..9.0)).collect();
            let w = wasserstein_distance(&a, &b).unwrap();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            let oracle = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64;
            assert!((w - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn wasserstein_unequal_sizes_matches_quadrature() {
        let a = [0.0, 0.5, 2.0];
        let b = [1.0, 1.5, 1.75, 3.0, 4.0];
        let w = wasserstein_distance(&a, &b).unwrap();
        assert!((w - w1_quadrature(&a, &b)).abs() < 1e-4);
    }

    #[test]
    fn feature_similarity_examples() {
        let v = features_of(&[1.0, 3.0, 2.0, 5.0, 4.0, 4.0, 1.0, 0.0]);
        assert_eq!(feature_similarity(&v, &v), 1.0);
        let q = [1.0, 0.0, 0.0, 0.0, 0.0];
        let s = [-1.0, 0.0, 0.0, 0.0, 0.0];
        assert!((feature_vector_similarity(&q, &s) - 1.0 / 3.0).abs() < 1e-8);
        assert_eq!(feature_vector_similarity(&[0.0; 5], &[0.0; 5]), 1.0);
    }

    #[test]
    fn variance_ratio_examples() {
        assert!((variance_ratio_similarity(2.0, 2.0) - 1.0).abs() <= EPSILON);
        assert_eq!(variance_ratio_similarity(1.0, 4.0), 0.25);
        assert_eq!(variance_ratio_similarity(0.0, 1.0), 0.0);
    }

    #[test]
    fn ensemble_examples() {
        let xs: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin() * 3.0 + i as f64 * 0.01).collect();
        let q = features_of(&xs);
        assert_eq!(ensemble_similarity(&q, &q).unwrap(), 1.0);
        assert!((combine([1.0, 1.0, 0.5, 0.5]) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn ensemble_of_disjoint_constants() {
        let q = features_of(&[0.0; 20]);
        let s = features_of(&[10.0; 20]);
        let b = similarity_breakdown(&q, &s).unwrap();
        assert_eq!(b.ks, 0.0);
        assert_eq!(b.variance, 0.0);
        // W1 = 10 over the ε guard, feature distance 10 over scale 5.
        let expected_w = 1.0 / (1.0 + 10.0 / EPSILON);
        let expected_feat = 1.0 / (1.0 + 10.0 / (5.0 + EPSILON));
        assert!((b.wasserstein - expected_w).abs() < 1e-15);
        assert!((b.feature - expected_feat).abs() < 1e-12);
        let sim = b.ensemble();
        assert!((sim - (0.3 * expected_w + 0.2 * expected_feat)).abs() < 1e-12);
        assert!(sim < 0.6);
    }

    #[test]
    fn ks_discriminates_distinct_continuous_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a: Vec<f64> = (0..30).map(|_| rng.gen::<f64>()).collect();
            let mut b = a.clone();
            let k = rng.gen_range(0..b.len());
            b[k] += 0.5;
            assert!(ks_similarity(&a, &b).unwrap() < 1.0);
            let mut perm = a.clone();
            perm.reverse();
            assert_eq!(ks_similarity(&a, &perm).unwrap(), 1.0);
        }
    }

    #[test]
    fn ensemble_consistency_grows_with_sample_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut mean_sim = |n: usize| {
            let reps = 20;
            let mut total = 0.0;
            for _ in 0..reps {
                let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                total += ensemble_similarity(&features_of(&a), &features_of(&b)).unwrap();
            }
            total / reps as f64
        };
        let s50 = mean_sim(50);
        let s500 = mean_sim(500);
        let s5000 = mean_sim(5000);
        assert!(s50 < s500 && s500 < s5000, "{s50} {s500} {s5000}");
        assert!(s5000 > 0.95);
    }
}
