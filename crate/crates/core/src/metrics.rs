//! Ranking metrics for probe evaluation and distribution-shape metrics for
//! single activation vectors.
//!
//! Ranking metrics take `(scores, labels)` pairs with labels in `{0, 1}`.
//! Shape metrics (kurtosis, Hoyer, Gini, norms) take one vector and are
//! computed in `f64` regardless of the storage precision of the input.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Variance below which excess kurtosis is rejected as undefined.
pub const MIN_KURTOSIS_VARIANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("{metric} is undefined without both classes ({positives} positives, {negatives} negatives)")]
    SingleClass {
        metric: &'static str,
        positives: usize,
        negatives: usize,
    },
    #[error("auprc is undefined with zero positives")]
    NoPositives,
    #[error("vector too short: length {0}, need at least 2")]
    TooShort(usize),
    #[error("near-zero variance ({0:e}); kurtosis undefined")]
    NearZeroVariance(f64),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

/// Every metric the toolkit can report on a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Auroc,
    Auprc,
    ExcessKurtosis,
    Hoyer,
    Gini,
    L1Norm,
    L2Norm,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Accuracy,
        MetricKind::Auroc,
        MetricKind::Auprc,
        MetricKind::ExcessKurtosis,
        MetricKind::Hoyer,
        MetricKind::Gini,
        MetricKind::L1Norm,
        MetricKind::L2Norm,
    ];

    pub const SHAPE: [MetricKind; 5] = [
        MetricKind::ExcessKurtosis,
        MetricKind::Hoyer,
        MetricKind::Gini,
        MetricKind::L1Norm,
        MetricKind::L2Norm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Auroc => "auroc",
            MetricKind::Auprc => "auprc",
            MetricKind::ExcessKurtosis => "excess_kurtosis",
            MetricKind::Hoyer => "hoyer",
            MetricKind::Gini => "gini",
            MetricKind::L1Norm => "l1_norm",
            MetricKind::L2Norm => "l2_norm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let alias = match s {
            "kurtosis" => Some(MetricKind::ExcessKurtosis),
            "l1" => Some(MetricKind::L1Norm),
            "l2" => Some(MetricKind::L2Norm),
            _ => None,
        };
        alias.or_else(|| Self::ALL.into_iter().find(|m| m.name() == s))
    }

    /// True for metrics defined on a single activation vector.
    pub fn is_shape(self) -> bool {
        Self::SHAPE.contains(&self)
    }

    /// Evaluates a shape metric on one vector. Ranking metrics return `None`.
    pub fn shape_value(self, x: &[f64]) -> Option<Result<f64, MetricError>> {
        let v = match self {
            MetricKind::ExcessKurtosis => excess_kurtosis(x),
            MetricKind::Hoyer => hoyer(x),
            MetricKind::Gini => gini(x),
            MetricKind::L1Norm => Ok(l1_norm(x)),
            MetricKind::L2Norm => Ok(l2_norm(x)),
            _ => return None,
        };
        Some(v)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_pairs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    let positives = labels.iter().filter(|&&y| y != 0).count();
    Ok((positives, labels.len() - positives))
}

/// Indices sorted by descending score. Ties keep index order.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    idx
}

/// Walks `scores` in descending order, yielding `(tp, fp)` cumulative counts
/// at the end of each block of tied scores.
fn tie_blocks(scores: &[f64], labels: &[u8]) -> Vec<(usize, usize)> {
    let order = descending_order(scores);
    let mut blocks = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        blocks.push((tp, fp));
    }
    blocks
}

/// Area under the ROC curve in the Mann–Whitney form: the fraction of
/// (positive, negative) pairs ranked concordantly, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    let (positives, negatives) = check_pairs(scores, labels)?;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::SingleClass {
            metric: "auroc",
            positives,
            negatives,
        });
    }
    // Trapezoids between successive tie blocks count each concordant pair
    // once and each tied pair one half.
    let mut area2 = 0u128;
    let (mut prev_tp, mut prev_fp) = (0u128, 0u128);
    for (tp, fp) in tie_blocks(scores, labels) {
        let (tp, fp) = (tp as u128, fp as u128);
        area2 += (fp - prev_fp) * (tp + prev_tp);
        prev_tp = tp;
        prev_fp = fp;
    }
    Ok(area2 as f64 / (2.0 * positives as f64 * negatives as f64))
}

/// Average precision: Σ Δrecall · precision over descending unique score
/// thresholds, with tied scores admitted as one block.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    let (positives, _) = check_pairs(scores, labels)?;
    if positives == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut ap = 0.0;
    let mut prev_tp = 0usize;
    for (tp, fp) in tie_blocks(scores, labels) {
        if tp > prev_tp {
            let precision = tp as f64 / (tp + fp) as f64;
            ap += (tp - prev_tp) as f64 / positives as f64 * precision;
        }
        prev_tp = tp;
    }
    Ok(ap)
}

pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64, MetricError> {
    if predictions.len() != labels.len() {
        return Err(MetricError::LengthMismatch(predictions.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p != 0) == (**y != 0))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Excess kurtosis from population moments: m4 / m2² − 3.
pub fn excess_kurtosis(x: &[f64]) -> Result<f64, MetricError> {
    if x.len() < 2 {
        return Err(MetricError::TooShort(x.len()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &v in x {
        let c = v - mean;
        let c2 = c * c;
        m2 += c2;
        m4 += c2 * c2;
    }
    m2 /= n;
    m4 /= n;
    if m2.is_nan() || m2 < MIN_KURTOSIS_VARIANCE {
        return Err(MetricError::NearZeroVariance(m2));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Hoyer sparsity, (√d − ‖x‖₁/‖x‖₂)/(√d − 1). Zero for the all-zero vector.
pub fn hoyer(x: &[f64]) -> Result<f64, MetricError> {
    if x.len() < 2 {
        return Err(MetricError::TooShort(x.len()));
    }
    let l2 = l2_norm(x);
    if l2 == 0.0 {
        return Ok(0.0);
    }
    let sqrt_d = (x.len() as f64).sqrt();
    let h = (sqrt_d - l1_norm(x) / l2) / (sqrt_d - 1.0);
    // ‖x‖₁/‖x‖₂ lies in [1, √d]; rounding can step just outside.
    Ok(h.clamp(0.0, 1.0))
}

/// Gini index over sorted absolute magnitudes. Zero for the all-zero vector.
pub fn gini(x: &[f64]) -> Result<f64, MetricError> {
    if x.len() < 2 {
        return Err(MetricError::TooShort(x.len()));
    }
    let mut v: Vec<f64> = x.iter().map(|a| a.abs()).collect();
    v.sort_by(f64::total_cmp);
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let d = v.len() as f64;
    let weighted: f64 = v
        .iter()
        .enumerate()
        .map(|(k, &vk)| (2.0 * (k + 1) as f64 - d - 1.0) * vk)
        .sum();
    Ok((weighted / (d * total)).max(0.0))
}

pub fn l1_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn l2_norm(x: &[f64]) -> f64 {
    // Scaled to avoid overflow on very large activations.
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let ss: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * ss.sqrt()
}
