//! Features over the element-wise absolute difference of two evidence
//! sequences, and the linear classifier that decides whether they correlate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evidence::Evidence;

pub const FEATURE_COUNT: usize = 7;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["avg", "stddev", "min", "max", "max_min_diff", "mad", "mod_z"];
const MOD_Z_SCALE: f64 = 0.6745;

static SHIPPED: &str = include_str!("../data/classifier_v1.json");

#[derive(Debug, Error, PartialEq)]
pub enum CorrelationError {
    #[error("evidence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty evidence")]
    Empty,
    #[error("training data must contain both labels")]
    DegenerateDataset,
    #[error("invalid classifier: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub avg: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    pub max_min_diff: f64,
    pub mad: f64,
    pub mod_z: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [self.avg, self.stddev, self.min, self.max, self.max_min_diff, self.mad, self.mod_z]
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Statistics of a non-empty difference vector.
pub fn features_of_diffs(d: &[f64]) -> FeatureVector {
    let n = d.len() as f64;
    let avg = d.iter().sum::<f64>() / n;
    let stddev = (d.iter().map(|x| (x - avg).powi(2)).sum::<f64>() / n).sqrt();
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let med = median(d);
    let dev: Vec<f64> = d.iter().map(|x| (x - med).abs()).collect();
    let mad = median(&dev);
    let mod_z = if mad == 0.0 { 0.0 } else { dev.iter().map(|x| MOD_Z_SCALE * x / mad).fold(0.0, f64::max) };
    FeatureVector { avg, stddev, min, max, max_min_diff: max - min, mad, mod_z }
}

pub fn features(e1: &Evidence, e2: &Evidence) -> Result<FeatureVector, CorrelationError> {
    if e1.len() != e2.len() {
        return Err(CorrelationError::LengthMismatch { left: e1.len(), right: e2.len() });
    }
    if e1.is_empty() {
        return Err(CorrelationError::Empty);
    }
    let d: Vec<f64> = e1.intervals.iter().zip(&e2.intervals).map(|(&a, &b)| (a as f64 - b as f64).abs()).collect();
    Ok(features_of_diffs(&d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    ThresholdBaseline,
    LinearTrained,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(rows: &[[f64; FEATURE_COUNT]]) -> Self {
        let n = rows.len() as f64;
        let mut mean = vec![0.0; FEATURE_COUNT];
        let mut std = vec![0.0; FEATURE_COUNT];
        for j in 0..FEATURE_COUNT {
            mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Standardization { mean, std }
    }

    pub fn apply(&self, x: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|j| (x[j] - self.mean[j]) / self.std[j])
    }
}

/// Linear scorer: score = w · standardize(x) + b; correlated iff score ≥ τ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub kind: ClassifierKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub tau: f64,
    pub standardization: Option<Standardization>,
}

impl Classifier {
    /// Accepts when the mean absolute difference is at most `max_avg_ms`.
    pub fn baseline(max_avg_ms: f64) -> Self {
        let mut weights = vec![0.0; FEATURE_COUNT];
        weights[0] = -1.0;
        Classifier {
            kind: ClassifierKind::ThresholdBaseline,
            weights,
            bias: 0.0,
            tau: -max_avg_ms,
            standardization: None,
        }
    }

    /// The trained parameters bundled with the library.
    pub fn shipped() -> Self {
        Classifier::from_json(SHIPPED).expect("bundled classifier parses")
    }

    pub fn from_json(s: &str) -> Result<Self, CorrelationError> {
        let c: Classifier = serde_json::from_str(s).map_err(|e| CorrelationError::Invalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CorrelationError> {
        if self.weights.len() != FEATURE_COUNT {
            return Err(CorrelationError::Invalid(format!("expected {FEATURE_COUNT} weights")));
        }
        if let Some(s) = &self.standardization {
            if s.mean.len() != FEATURE_COUNT || s.std.len() != FEATURE_COUNT || s.std.iter().any(|&v| v <= 0.0) {
                return Err(CorrelationError::Invalid("bad standardization".into()));
            }
        }
        let finite = self.weights.iter().chain([&self.bias, &self.tau]).all(|v| v.is_finite());
        if !finite {
            return Err(CorrelationError::Invalid("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn score(&self, f: &FeatureVector) -> f64 {
        let raw = f.to_array();
        let x = match &self.standardization {
            Some(s) => s.apply(&raw),
            None => raw,
        };
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn classify(&self, f: &FeatureVector) -> (f64, bool) {
        let s = self.score(f);
        (s, s >= self.tau)
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Classifier { tau, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatures {
    #[serde(flatten)]
    pub features: FeatureVector,
    /// +1 for a legitimate pair, −1 otherwise.
    pub label: i8,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { iterations: 3000, learning_rate: 0.5, l2: 1e-4 }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// L2-regularised logistic regression on standardized features, fitted by
/// full-batch gradient descent from zero weights.
pub fn train(data: &[LabeledFeatures], cfg: &TrainConfig) -> Result<Classifier, CorrelationError> {
    let pos = data.iter().filter(|d| d.label > 0).count();
    if pos == 0 || pos == data.len() {
        return Err(CorrelationError::DegenerateDataset);
    }
    let raw: Vec<[f64; FEATURE_COUNT]> = data.iter().map(|d| d.features.to_array()).collect();
    let st = Standardization::fit(&raw);
    let xs: Vec<[f64; FEATURE_COUNT]> = raw.iter().map(|r| st.apply(r)).collect();
    let ys: Vec<f64> = data.iter().map(|d| if d.label > 0 { 1.0 } else { 0.0 }).collect();
    let n = data.len() as f64;
    let mut w = [0.0f64; FEATURE_COUNT];
    let mut b = 0.0f64;
    for _ in 0..cfg.iterations {
        let mut gw = [0.0f64; FEATURE_COUNT];
        let mut gb = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let z = w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b;
            let err = sigmoid(z) - y;
            for j in 0..FEATURE_COUNT {
                gw[j] += err * x[j];
            }
            gb += err;
        }
        for j in 0..FEATURE_COUNT {
            w[j] -= cfg.learning_rate * (gw[j] / n + cfg.l2 * w[j]);
        }
        b -= cfg.learning_rate * gb / n;
    }
    let c = Classifier {
        kind: ClassifierKind::LinearTrained,
        weights: w.to_vec(),
        bias: b,
        tau: 0.0,
        standardization: Some(st),
    };
    c.validate()?;
    Ok(c)
}

pub fn labeled(e1: &Evidence, e2: &Evidence, label: i8) -> Result<LabeledFeatures, CorrelationError> {
    Ok(LabeledFeatures { features: features(e1, e2)?, label })
}
