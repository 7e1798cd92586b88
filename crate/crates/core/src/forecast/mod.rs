//! Compact forecasters with a frozen-backbone / trainable-head split.
//!
//! Every model is evaluated as `head(backbone(input))`. Test-time adaptation
//! only touches the head, so the backbone features of a window can be
//! computed once per batch and reused across gradient steps.

mod adam;
pub mod dlinear;
mod gru;
mod io;
mod loss;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adam::OptimizerState;
pub use io::{load_weights, save_weights};
pub use loss::smooth_l1;
pub use train::{train_full, TrainConfig, TrainReport};

use crate::data::WindowPair;
use crate::error::{Error, Result};
use crate::seeding::{self, Stream};
use gru::GruDims;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    #[serde(rename = "dlinear")]
    DLinear,
    GruSmall,
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::DLinear => "dlinear",
            Architecture::GruSmall => "gru_small",
        }
    }

    pub(crate) fn tag(&self) -> u8 {
        match self {
            Architecture::DLinear => 1,
            Architecture::GruSmall => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Architecture::DLinear),
            2 => Some(Architecture::GruSmall),
            _ => None,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dlinear" => Ok(Architecture::DLinear),
            "gru_small" | "gru" => Ok(Architecture::GruSmall),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// Architecture choice plus its size hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    /// GRU hidden width.
    pub hidden: usize,
    /// GRU depth.
    pub layers: usize,
    /// DLinear moving-average kernel.
    pub kernel: usize,
}

impl ModelSpec {
    pub fn dlinear() -> Self {
        Self {
            arch: Architecture::DLinear,
            hidden: 0,
            layers: 0,
            kernel: 25,
        }
    }

    pub fn gru_small() -> Self {
        Self {
            arch: Architecture::GruSmall,
            hidden: 64,
            layers: 2,
            kernel: 0,
        }
    }

    pub fn for_arch(arch: Architecture) -> Self {
        match arch {
            Architecture::DLinear => Self::dlinear(),
            Architecture::GruSmall => Self::gru_small(),
        }
    }
}

/// Sizes fixed at construction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub seq_len: usize,
    pub horizon: usize,
    pub hidden: usize,
    pub layers: usize,
    pub kernel: usize,
}

/// Flat parameter store split into a frozen backbone and a trainable head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub arch: Architecture,
    pub shape: ModelShape,
    pub backbone: Vec<f64>,
    pub head: Vec<f64>,
}

impl ModelWeights {
    fn dims(&self) -> GruDims {
        GruDims {
            seq_len: self.shape.seq_len,
            horizon: self.shape.horizon,
            hidden: self.shape.hidden,
            layers: self.shape.layers,
        }
    }

    fn shape_for(spec: &ModelSpec, seq_len: usize, horizon: usize) -> Result<ModelShape> {
        if seq_len == 0 || horizon == 0 {
            return Err(Error::Config("seq_len and horizon must be positive".into()));
        }
        match spec.arch {
            Architecture::DLinear if spec.kernel == 0 => {
                return Err(Error::Config("DLinear kernel must be positive".into()))
            }
            Architecture::GruSmall if spec.hidden == 0 || spec.layers == 0 => {
                return Err(Error::Config("GRU hidden size and depth must be positive".into()))
            }
            _ => {}
        }
        Ok(ModelShape {
            seq_len,
            horizon,
            hidden: spec.hidden,
            layers: spec.layers,
            kernel: spec.kernel,
        })
    }

    pub(crate) fn expected_lengths(arch: Architecture, shape: &ModelShape) -> (usize, usize) {
        match arch {
            Architecture::DLinear => (0, dlinear::head_len(shape.seq_len, shape.horizon)),
            Architecture::GruSmall => {
                let dims = GruDims {
                    seq_len: shape.seq_len,
                    horizon: shape.horizon,
                    hidden: shape.hidden,
                    layers: shape.layers,
                };
                (dims.backbone_len(), dims.head_len())
            }
        }
    }

    /// All-zero parameters.
    pub fn zeros(spec: &ModelSpec, seq_len: usize, horizon: usize) -> Result<Self> {
        let shape = Self::shape_for(spec, seq_len, horizon)?;
        let (nb, nh) = Self::expected_lengths(spec.arch, &shape);
        Ok(Self {
            arch: spec.arch,
            shape,
            backbone: vec![0.0; nb],
            head: vec![0.0; nh],
        })
    }

    /// Seeded initialisation.
    pub fn init(spec: &ModelSpec, seq_len: usize, horizon: usize, seed: u64) -> Result<Self> {
        let mut w = Self::zeros(spec, seq_len, horizon)?;
        match spec.arch {
            Architecture::DLinear => w.head = dlinear::init_head(seq_len, horizon),
            Architecture::GruSmall => {
                let mut rng = seeding::rng(seed, Stream::Init, 0);
                let (backbone, head) = gru::init(&w.dims(), &mut rng);
                w.backbone = backbone;
                w.head = head;
            }
        }
        Ok(w)
    }

    pub fn param_count(&self) -> usize {
        self.backbone.len() + self.head.len()
    }

    /// Check that `other` can replace `self` (same architecture and sizes).
    pub fn check_compatible(&self, other: &ModelWeights) -> Result<()> {
        if self.arch != other.arch || self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{} {:?} is not compatible with {} {:?}",
                other.arch, other.shape, self.arch, self.shape
            )));
        }
        let (nb, nh) = Self::expected_lengths(other.arch, &other.shape);
        if other.backbone.len() != nb || other.head.len() != nh {
            return Err(Error::Shape("parameter vector lengths do not match shape".into()));
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) {
        assert_eq!(
            input.len(),
            self.shape.seq_len,
            "input length must equal the model's sequence length"
        );
    }

    /// Backbone output for one input window: the decomposition for DLinear,
    /// the final hidden state of the last GRU layer for GRU-small.
    pub fn embed(&self, input: &[f64]) -> Vec<f64> {
        self.check_input(input);
        match self.arch {
            Architecture::DLinear => dlinear::features(input, self.shape.kernel),
            Architecture::GruSmall => gru::embed(&self.dims(), &self.backbone, input),
        }
    }

    pub fn head_forward(&self, features: &[f64]) -> Vec<f64> {
        self.head_forward_with(&self.head, features)
    }

    /// Head output using an alternative head parameter vector.
    pub fn head_forward_with(&self, head: &[f64], features: &[f64]) -> Vec<f64> {
        match self.arch {
            Architecture::DLinear => dlinear::head_forward(head, features, self.shape.seq_len, self.shape.horizon),
            Architecture::GruSmall => gru::head_forward(&self.dims(), head, features),
        }
    }

    /// Accumulate `d_out`-weighted head gradients into `grad`.
    pub fn head_backward(&self, features: &[f64], d_out: &[f64], grad: &mut [f64]) {
        match self.arch {
            Architecture::DLinear => {
                dlinear::head_backward(grad, features, d_out, self.shape.seq_len, self.shape.horizon)
            }
            Architecture::GruSmall => {
                gru::head_backward(&self.dims(), &self.head, grad, features, d_out);
            }
        }
    }

    pub fn forecast(&self, input: &[f64]) -> Vec<f64> {
        self.head_forward(&self.embed(input))
    }

    /// Forecast together with the backbone embedding.
    pub fn forecast_with_embedding(&self, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let e = self.embed(input);
        (self.head_forward(&e), e)
    }

    /// Mean SmoothL1 loss over precomputed `(features, target)` pairs.
    pub fn head_loss<'a>(&self, head: &[f64], samples: impl IntoIterator<Item = (&'a [f64], &'a [f64])>, delta: f64) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for (feat, target) in samples {
            let pred = self.head_forward_with(head, feat);
            total += pred
                .iter()
                .zip(target)
                .map(|(p, y)| loss::huber(p - y, delta))
                .sum::<f64>()
                / pred.len() as f64;
            count += 1;
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    /// Mean loss and its exact gradient w.r.t. the head, with backbone
    /// features treated as constants.
    pub fn head_loss_and_grad<'a>(
        &self,
        samples: &[(&'a [f64], &'a [f64])],
        delta: f64,
    ) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.head.len()];
        if samples.is_empty() {
            return (0.0, grad);
        }
        let scale = 1.0 / samples.len() as f64;
        let mut total = 0.0;
        let mut d_out = vec![0.0; self.shape.horizon];
        for &(feat, target) in samples {
            let pred = self.head_forward(feat);
            total += loss::smooth_l1_with_grad(&pred, target, delta, scale, &mut d_out);
            self.head_backward(feat, &d_out, &mut grad);
        }
        (total * scale, grad)
    }

    /// Head gradient over raw windows (backbone evaluated on each input).
    pub fn head_gradient(&self, windows: &[WindowPair], delta: f64) -> (f64, Vec<f64>) {
        let feats: Vec<Vec<f64>> = windows.iter().map(|w| self.embed(&w.input)).collect();
        let samples: Vec<(&[f64], &[f64])> = feats
            .iter()
            .zip(windows)
            .map(|(f, w)| (f.as_slice(), w.target.as_slice()))
            .collect();
        self.head_loss_and_grad(&samples, delta)
    }

    /// Mean loss and the full gradient `(d backbone, d head)` by backpropagation.
    pub fn full_loss_and_grad(&self, windows: &[&WindowPair], delta: f64) -> (f64, Vec<f64>, Vec<f64>) {
        let mut g_backbone = vec![0.0; self.backbone.len()];
        let mut g_head = vec![0.0; self.head.len()];
        if windows.is_empty() {
            return (0.0, g_backbone, g_head);
        }
        let scale = 1.0 / windows.len() as f64;
        let mut total = 0.0;
        let mut d_out = vec![0.0; self.shape.horizon];
        for w in windows {
            self.check_input(&w.input);
            match self.arch {
                Architecture::DLinear => {
                    let feat = dlinear::features(&w.input, self.shape.kernel);
                    let pred = self.head_forward(&feat);
                    total += loss::smooth_l1_with_grad(&pred, &w.target, delta, scale, &mut d_out);
                    self.head_backward(&feat, &d_out, &mut g_head);
                }
                Architecture::GruSmall => {
                    let dims = self.dims();
                    let (emb, trace) = gru::backbone_forward(&dims, &self.backbone, &w.input);
                    let pred = gru::head_forward(&dims, &self.head, &emb);
                    total += loss::smooth_l1_with_grad(&pred, &w.target, delta, scale, &mut d_out);
                    let d_emb = gru::head_backward(&dims, &self.head, &mut g_head, &emb, &d_out);
                    gru::backbone_backward(&dims, &self.backbone, &mut g_backbone, &trace, &d_emb);
                }
            }
        }
        (total * scale, g_backbone, g_head)
    }

    /// Mean loss over raw windows.
    pub fn loss(&self, windows: &[WindowPair], delta: f64) -> f64 {
        if windows.is_empty() {
            return 0.0;
        }
        windows
            .iter()
            .map(|w| {
                let pred = self.forecast(&w.input);
                pred.iter().zip(&w.target).map(|(p, y)| loss::huber(p - y, delta)).sum::<f64>() / pred.len() as f64
            })
            .sum::<f64>()
            / windows.len() as f64
    }
}
