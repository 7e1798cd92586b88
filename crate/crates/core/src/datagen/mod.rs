//! Seeded synthetic regime scenarios and the ETT-style CSV loader.
//!
//! Every scenario is a sum of a piecewise regime signal (level, linear slope
//! and seasonal amplitude per segment), a sinusoid with period
//! `season_length`, and stationary AR(1) noise whose marginal standard
//! deviation is `noise_std · noise_scale`. Some scenarios add a smooth
//! overlay on top (volatility modulation, a decaying shock). All magnitudes
//! below are defaults of this crate, chosen so that regimes are clearly
//! distinguishable at a season length of 50.

mod csv_io;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::seeding::{self, Stream};

pub use csv_io::{load_csv, season_for_name, write_csv, DatasetInfo};

/// Season length of every synthetic scenario.
pub const SYNTH_SEASON: usize = 50;
/// Default dataset seed, independent of run seeds.
pub const DEFAULT_DATA_SEED: u64 = 42;
/// Default series length.
pub const DEFAULT_LENGTH: usize = 10_000;
/// Minimum length: initial training prefix plus one batch.
pub const MIN_LENGTH: usize = 720 + 750;

/// Seasonal amplitude of the baseline regime.
const BASE_AMPLITUDE: f64 = 2.0;
/// AR(1) coefficient of the noise process.
const AR_COEF: f64 = 0.7;
/// Total rise of the trend before the break and of the slow drift.
const TREND_RISE: f64 = 10.0;
/// Segment length of the fast switch: two seasons.
const FAST_SWITCH_PERIOD: usize = 2 * SYNTH_SEASON;
/// Segment length of the recurring cycle.
const RECURRING_PERIOD: usize = 1_500;
/// Period of the volatility modulation and its noise-scale range.
const VOLATILITY_PERIOD: f64 = 3_000.0;
const VOLATILITY_RANGE: (f64, f64) = (0.5, 3.0);
/// Shock: size in noise standard deviations, onset fraction, decay constant.
/// The decay leaves under 1% of the shock after 1,000 samples.
const SHOCK_SIGMAS: f64 = 8.0;
const SHOCK_AT: f64 = 0.6;
const SHOCK_TAU: f64 = 200.0;
/// Segment length range of the multi-regime scenario.
const MULTI_SEGMENT: (usize, usize) = (500, 1_500);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Stable,
    TrendBreak,
    SlowDrift,
    FastSwitch,
    Recurring,
    Volatility,
    ShockRecovery,
    MultiRegime,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::Stable,
        ScenarioKind::TrendBreak,
        ScenarioKind::SlowDrift,
        ScenarioKind::FastSwitch,
        ScenarioKind::Recurring,
        ScenarioKind::Volatility,
        ScenarioKind::ShockRecovery,
        ScenarioKind::MultiRegime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Stable => "stable",
            ScenarioKind::TrendBreak => "trend_break",
            ScenarioKind::SlowDrift => "slow_drift",
            ScenarioKind::FastSwitch => "fast_switch",
            ScenarioKind::Recurring => "recurring",
            ScenarioKind::Volatility => "volatility",
            ScenarioKind::ShockRecovery => "shock_recovery",
            ScenarioKind::MultiRegime => "multi_regime",
        }
    }

    /// Dataset name, `synth_<scenario>`.
    pub fn dataset_name(self) -> String {
        format!("synth_{}", self.name())
    }

    /// Whether the scenario alternates between distinct regime parameter sets.
    pub fn is_multi_regime(self) -> bool {
        matches!(self, ScenarioKind::FastSwitch | ScenarioKind::Recurring | ScenarioKind::MultiRegime)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    /// Accepts both `recurring` and `synth_recurring`.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.strip_prefix("synth_").unwrap_or(s);
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown synthetic scenario '{s}'")))
    }
}

/// Parameters of one regime segment, active from `start` until the next
/// segment begins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSegment {
    pub start: usize,
    /// Identifier of the parameter set; equal ids denote the same regime.
    pub regime: usize,
    /// Level at the segment start.
    pub level: f64,
    /// Level change per sample within the segment.
    pub slope: f64,
    pub amplitude: f64,
    /// Multiplier on `noise_std`.
    pub noise_scale: f64,
}

impl RegimeSegment {
    fn flat(start: usize, regime: usize, level: f64, amplitude: f64, noise_scale: f64) -> Self {
        Self {
            start,
            regime,
            level,
            slope: 0.0,
            amplitude,
            noise_scale,
        }
    }
}

/// A fully specified synthetic series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub length: usize,
    pub season_length: usize,
    /// Marginal standard deviation of the AR(1) noise in the baseline regime.
    pub noise_std: f64,
    pub ar_coef: f64,
    pub seed: u64,
    /// Segments in increasing start order; the first starts at 0.
    pub schedule: Vec<RegimeSegment>,
}

/// Regime parameter sets `(level, amplitude, noise_scale)` of the recurring scenario.
const RECURRING_REGIMES: [(f64, f64, f64); 3] = [(0.0, 2.0, 1.0), (6.0, 5.0, 1.5), (-4.0, 1.0, 0.5)];
/// Parameter sets of the fast switch.
const FAST_SWITCH_REGIMES: [(f64, f64, f64); 2] = [(0.0, 2.0, 1.0), (3.0, 4.0, 1.5)];
/// Parameter sets of the multi-regime scenario.
const MULTI_REGIMES: [(f64, f64, f64); 4] = [(0.0, 2.0, 1.0), (5.0, 3.0, 0.7), (-3.0, 1.0, 1.5), (2.0, 4.0, 0.5)];

impl ScenarioSpec {
    /// Default specification of `kind` with the given seed and length.
    pub fn new(kind: ScenarioKind, length: usize, seed: u64) -> Self {
        let mut spec = Self {
            kind,
            length,
            season_length: SYNTH_SEASON,
            noise_std: 1.0,
            ar_coef: AR_COEF,
            seed,
            schedule: Vec::new(),
        };
        spec.schedule = spec.default_schedule();
        spec
    }

    pub fn with_defaults(kind: ScenarioKind) -> Self {
        Self::new(kind, DEFAULT_LENGTH, DEFAULT_DATA_SEED)
    }

    fn default_schedule(&self) -> Vec<RegimeSegment> {
        let n = self.length;
        let base = RegimeSegment::flat(0, 0, 0.0, BASE_AMPLITUDE, 1.0);
        let cycle = |period: usize, sets: &[(f64, f64, f64)]| -> Vec<RegimeSegment> {
            (0..n.div_ceil(period))
                .map(|i| {
                    let r = i % sets.len();
                    let (level, amp, ns) = sets[r];
                    RegimeSegment::flat(i * period, r, level, amp, ns)
                })
                .collect()
        };
        match self.kind {
            ScenarioKind::Stable | ScenarioKind::Volatility | ScenarioKind::ShockRecovery => vec![base],
            ScenarioKind::TrendBreak => {
                let mid = n / 2;
                let slope = TREND_RISE / mid.max(1) as f64;
                vec![
                    RegimeSegment { slope, ..base },
                    RegimeSegment {
                        start: mid,
                        regime: 1,
                        level: TREND_RISE,
                        slope: -slope,
                        ..base
                    },
                ]
            }
            ScenarioKind::SlowDrift => vec![RegimeSegment {
                slope: TREND_RISE / n.max(1) as f64,
                ..base
            }],
            ScenarioKind::FastSwitch => cycle(FAST_SWITCH_PERIOD, &FAST_SWITCH_REGIMES),
            ScenarioKind::Recurring => cycle(RECURRING_PERIOD, &RECURRING_REGIMES),
            ScenarioKind::MultiRegime => {
                let mut rng = seeding::rng(self.seed, Stream::Data, 1_000);
                let mut segments = Vec::new();
                let mut start = 0;
                let mut regime = rng.gen_range(0..MULTI_REGIMES.len());
                while start < n {
                    let (level, amp, ns) = MULTI_REGIMES[regime];
                    segments.push(RegimeSegment::flat(start, regime, level, amp, ns));
                    start += rng.gen_range(MULTI_SEGMENT.0..=MULTI_SEGMENT.1);
                    let step = rng.gen_range(1..MULTI_REGIMES.len());
                    regime = (regime + step) % MULTI_REGIMES.len();
                }
                segments
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < MIN_LENGTH {
            return Err(Error::Config(format!(
                "scenario length {} is below the minimum {MIN_LENGTH}",
                self.length
            )));
        }
        if self.season_length < 2 {
            return Err(Error::Config("season_length must be at least 2".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be finite and non-negative, got {}", self.noise_std)));
        }
        if !(self.ar_coef.abs() < 1.0) {
            return Err(Error::Config(format!("ar_coef must lie in (-1, 1), got {}", self.ar_coef)));
        }
        match self.schedule.first() {
            Some(s) if s.start == 0 => {}
            _ => return Err(Error::Config("schedule must start with a segment at index 0".into())),
        }
        for pair in self.schedule.windows(2) {
            if pair[1].start <= pair[0].start {
                return Err(Error::Config("schedule starts must be strictly increasing".into()));
            }
        }
        for s in &self.schedule {
            let values = [s.level, s.slope, s.amplitude, s.noise_scale];
            if values.iter().any(|v| !v.is_finite()) || s.noise_scale < 0.0 {
                return Err(Error::Config(format!("invalid regime segment {s:?}")));
            }
        }
        Ok(())
    }

    /// Index into `schedule` of the segment active at `t`.
    pub fn segment_at(&self, t: usize) -> usize {
        self.schedule.partition_point(|s| s.start <= t).saturating_sub(1)
    }

    /// `[start, end)` ranges of every segment, clipped to the series length.
    pub fn segment_ranges(&self) -> Vec<(usize, usize, usize)> {
        self.schedule
            .iter()
            .enumerate()
            .filter(|(_, s)| s.start < self.length)
            .map(|(i, s)| {
                let end = self.schedule.get(i + 1).map_or(self.length, |n| n.start.min(self.length));
                (s.start, end, s.regime)
            })
            .collect()
    }

    /// Multiplicative noise factor from smooth overlays.
    fn noise_overlay(&self, t: usize) -> f64 {
        match self.kind {
            ScenarioKind::Volatility => {
                let (lo, hi) = VOLATILITY_RANGE;
                let phase = 0.5 * (1.0 - (2.0 * PI * t as f64 / VOLATILITY_PERIOD).cos());
                lo + (hi - lo) * phase
            }
            _ => 1.0,
        }
    }

    /// Additive level overlay.
    fn level_overlay(&self, t: usize) -> f64 {
        match self.kind {
            ScenarioKind::ShockRecovery => {
                let onset = (SHOCK_AT * self.length as f64) as usize;
                if t >= onset {
                    SHOCK_SIGMAS * self.noise_std * (-((t - onset) as f64) / SHOCK_TAU).exp()
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }
}

/// Generate the series described by `spec`. Pure in `spec`.
pub fn generate(spec: &ScenarioSpec) -> Result<TimeSeriesDataset> {
    spec.validate()?;
    let mut rng = seeding::rng(spec.seed, Stream::Data, spec.kind as u64);
    let phi = spec.ar_coef;
    let innovation = (1.0 - phi * phi).sqrt();
    let mut ar: f64 = StandardNormal.sample(&mut rng);
    let mut values = Vec::with_capacity(spec.length);
    for t in 0..spec.length {
        if t > 0 {
            let e: f64 = StandardNormal.sample(&mut rng);
            ar = phi * ar + innovation * e;
        }
        let seg = &spec.schedule[spec.segment_at(t)];
        let level = seg.level + seg.slope * (t - seg.start) as f64 + spec.level_overlay(t);
        let season = seg.amplitude * (2.0 * PI * t as f64 / spec.season_length as f64).sin();
        let noise = spec.noise_std * seg.noise_scale * spec.noise_overlay(t) * ar;
        values.push(level + season + noise);
    }
    TimeSeriesDataset::new(spec.kind.dataset_name(), values, "synthetic", spec.season_length)
}
