//! Bias-free L1-regularized logistic-regression probes.
//!
//! The probe models `P(y = 1 | x) = σ(x · w)` and is fit by minimizing
//!
//! ```text
//! F(w) = (1/n) Σ_i [softplus(x_i · w) − y_i (x_i · w)] + λ ‖w‖₁
//! ```
//!
//! with full-batch proximal gradient descent (ISTA). The L1 term is handled
//! exactly by soft-thresholding, so coordinates the data does not pay for
//! land on exactly zero.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MetricError};
use crate::store::{LayerKind, ProbeDataset, TaskKind};

pub const DEFAULT_LAMBDA: f64 = 3e-4;
pub const DEFAULT_MAX_ITERATIONS: usize = 5000;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Largest Lipschitz estimate tried before a step is declared stationary.
const MAX_LIPSCHITZ: f64 = 1e300;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("dimension mismatch: probe has {expected} weights, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input at component {0}")]
    NonFiniteInput(usize),
    #[error("training set is single-class ({positives} positives, {negatives} negatives)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("objective became non-finite at iteration {0}; step size too large")]
    NonFiniteObjective(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("malformed probe file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSize {
    /// Constant step η with no acceptance test.
    Fixed(f64),
    /// Backtracking on the quadratic upper bound; every accepted step also
    /// does not increase the full objective.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub max_iterations: usize,
    /// Stop once one iteration lowers the objective by less than this.
    pub tolerance: f64,
    pub step_size: StepSize,
    pub seed: u64,
    /// z-score features using statistics from the training set only.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: DEFAULT_LAMBDA,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
            step_size: StepSize::Backtracking,
            seed: 0,
            standardize: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(ProbeError::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(ProbeError::InvalidConfig(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(ProbeError::InvalidConfig("max_iterations must be positive".into()));
        }
        if let StepSize::Fixed(eta) = self.step_size {
            if !eta.is_finite() || eta <= 0.0 {
                return Err(ProbeError::InvalidConfig(format!("fixed step must be > 0, got {eta}")));
            }
        }
        Ok(())
    }
}

/// Per-feature affine map applied before the dot product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Fits mean and population std per column; constant columns get scale 1.
    pub fn fit(dataset: &ProbeDataset) -> Self {
        let d = dataset.dim();
        let n = dataset.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for row in dataset.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in dataset.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardization { mean, scale }
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}

/// A trained probe and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeWeights {
    pub weights: Vec<f64>,
    pub meta: ProbeMeta,
    pub standardization: Option<Standardization>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeMeta {
    pub task: TaskKind,
    pub layer: usize,
    pub kind: LayerKind,
    pub seed: u64,
    pub lambda: f64,
    pub train_objective: f64,
    pub n_train: usize,
}

/// JSON wire form. Field order is part of the file format.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeFile {
    task: TaskKind,
    layer: usize,
    kind: LayerKind,
    seed: u64,
    lambda: f64,
    weights: Vec<f64>,
    train_objective: f64,
    n_train: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    standardization: Option<Standardization>,
}

impl ProbeWeights {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// The logit `x · w` (after standardization, if the probe carries one).
    pub fn decision_value(&self, x: &[f64]) -> Result<f64, ProbeError> {
        if x.len() != self.weights.len() {
            return Err(ProbeError::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(ProbeError::NonFiniteInput(i));
        }
        Ok(match &self.standardization {
            None => dot(x, &self.weights),
            Some(st) => {
                let mut z = x.to_vec();
                st.apply_in_place(&mut z);
                dot(&z, &self.weights)
            }
        })
    }

    /// `σ(x · w)`: the probability that `x` carries the probed property.
    pub fn score(&self, x: &[f64]) -> Result<f64, ProbeError> {
        self.decision_value(x).map(sigmoid)
    }

    /// Number of weights with magnitude strictly above `epsilon`.
    pub fn sparsity(&self, epsilon: f64) -> usize {
        self.weights.iter().filter(|w| w.abs() > epsilon).count()
    }

    pub fn to_json(&self) -> String {
        let file = ProbeFile {
            task: self.meta.task,
            layer: self.meta.layer,
            kind: self.meta.kind,
            seed: self.meta.seed,
            lambda: self.meta.lambda,
            weights: self.weights.clone(),
            train_objective: self.meta.train_objective,
            n_train: self.meta.n_train,
            standardization: self.standardization.clone(),
        };
        serde_json::to_string(&file).expect("probe serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ProbeError> {
        let f: ProbeFile = serde_json::from_str(s)?;
        if let Some(i) = f.weights.iter().position(|w| !w.is_finite()) {
            return Err(ProbeError::NonFiniteInput(i));
        }
        if let Some(st) = &f.standardization {
            if st.mean.len() != f.weights.len() || st.scale.len() != f.weights.len() {
                return Err(ProbeError::DimensionMismatch {
                    expected: f.weights.len(),
                    got: st.mean.len().min(st.scale.len()),
                });
            }
        }
        Ok(ProbeWeights {
            weights: f.weights,
            meta: ProbeMeta {
                task: f.task,
                layer: f.layer,
                kind: f.kind,
                seed: f.seed,
                lambda: f.lambda,
                train_objective: f.train_objective,
                n_train: f.n_train,
            },
            standardization: f.standardization,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProbeError> {
        let mut s = self.to_json();
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProbeError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub probe: ProbeWeights,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// The smooth part of the training objective: mean logistic loss over a
/// borrowed design matrix.
pub struct LogisticLoss<'a> {
    features: &'a [f64],
    labels: &'a [u8],
    dim: usize,
}

impl<'a> LogisticLoss<'a> {
    pub fn new(dataset: &'a ProbeDataset) -> Self {
        LogisticLoss {
            features: dataset.features(),
            labels: &dataset.labels,
            dim: dataset.dim(),
        }
    }

    fn n(&self) -> usize {
        self.labels.len()
    }

    /// `margins[i] = x_i · w`.
    pub fn margins_into(&self, w: &[f64], margins: &mut [f64]) {
        for (m, row) in margins.iter_mut().zip(self.features.chunks_exact(self.dim)) {
            *m = dot(row, w);
        }
    }

    pub fn value_from_margins(&self, margins: &[f64]) -> f64 {
        let total: f64 = margins
            .iter()
            .zip(self.labels)
            .map(|(&z, &y)| if y != 0 { softplus(-z) } else { softplus(z) })
            .sum();
        total / self.n() as f64
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let mut m = vec![0.0; self.n()];
        self.margins_into(w, &mut m);
        self.value_from_margins(&m)
    }

    /// `(1/n) Xᵀ (σ(Xw) − y)`.
    pub fn gradient_from_margins(&self, margins: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let inv_n = 1.0 / self.n() as f64;
        for ((row, &z), &y) in self.features.chunks_exact(self.dim).zip(margins).zip(self.labels) {
            let r = (sigmoid(z) - y as f64) * inv_n;
            for (g, x) in grad.iter_mut().zip(row) {
                *g += r * x;
            }
        }
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.n()];
        self.margins_into(w, &mut m);
        let mut g = vec![0.0; self.dim];
        self.gradient_from_margins(&m, &mut g);
        g
    }

    /// Largest eigenvalue of `XᵀX / (4n)`, estimated by power iteration.
    /// This is the global Lipschitz constant of the gradient.
    fn lipschitz_estimate(&self) -> f64 {
        let n = self.n();
        let mut v = vec![1.0 / (self.dim as f64).sqrt(); self.dim];
        let mut xv = vec![0.0; n];
        let mut est = 0.0;
        for _ in 0..30 {
            self.margins_into(&v, &mut xv);
            let mut next = vec![0.0; self.dim];
            for (row, &a) in self.features.chunks_exact(self.dim).zip(&xv) {
                for (u, x) in next.iter_mut().zip(row) {
                    *u += a * x;
                }
            }
            let norm = dot(&next, &next).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            est = norm;
            next.iter_mut().for_each(|u| *u /= norm);
            v = next;
        }
        est / (4.0 * n as f64)
    }
}

/// Full objective `F(w)`.
pub fn objective(dataset: &ProbeDataset, w: &[f64], lambda: f64) -> f64 {
    LogisticLoss::new(dataset).value(w) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Fits a probe. Deterministic in `(dataset, config)`: starts from `w = 0`
/// and takes proximal gradient steps until one step lowers the objective by
/// less than `config.tolerance`.
pub fn train(dataset: &ProbeDataset, config: &TrainConfig) -> Result<TrainResult, ProbeError> {
    config.validate()?;
    let (positives, negatives) = dataset.class_counts();
    if positives == 0 || negatives == 0 {
        return Err(ProbeError::SingleClass { positives, negatives });
    }
    if let Some(i) = dataset.features().iter().position(|v| !v.is_finite()) {
        return Err(ProbeError::NonFiniteInput(i));
    }

    let standardization = config.standardize.then(|| Standardization::fit(dataset));
    let standardized;
    let data = match &standardization {
        None => dataset,
        Some(st) => {
            let mut copy = dataset.clone();
            for row in copy.features_mut().chunks_exact_mut(dataset.dim()) {
                st.apply_in_place(row);
            }
            standardized = copy;
            &standardized
        }
    };

    let (weights, objective_trace, converged) = ista(&LogisticLoss::new(data), config)?;
    let train_objective = *objective_trace.last().expect("trace holds the initial objective");
    Ok(TrainResult {
        probe: ProbeWeights {
            weights,
            meta: ProbeMeta {
                task: dataset.meta.task,
                layer: dataset.meta.layer,
                kind: dataset.meta.kind,
                seed: config.seed,
                lambda: config.lambda,
                train_objective,
                n_train: dataset.len(),
            },
            standardization,
        },
        objective_trace,
        converged,
    })
}

fn ista(loss: &LogisticLoss<'_>, config: &TrainConfig) -> Result<(Vec<f64>, Vec<f64>, bool), ProbeError> {
    let d = loss.dim;
    let n = loss.n();
    let lambda = config.lambda;
    let l1 = |w: &[f64]| w.iter().map(|v| v.abs()).sum::<f64>();

    let mut w = vec![0.0; d];
    let mut margins = vec![0.0; n];
    let mut f_smooth = loss.value_from_margins(&margins);
    let mut f_total = f_smooth;
    let mut trace = vec![f_total];

    let mut grad = vec![0.0; d];
    let mut cand = vec![0.0; d];
    let mut cand_margins = vec![0.0; n];
    let mut lipschitz = loss.lipschitz_estimate().max(f64::MIN_POSITIVE);

    for iter in 0..config.max_iterations {
        loss.gradient_from_margins(&margins, &mut grad);

        let (cand_smooth, cand_total) = match config.step_size {
            StepSize::Fixed(eta) => {
                prox_step(&w, &grad, eta, lambda, &mut cand);
                loss.margins_into(&cand, &mut cand_margins);
                let s = loss.value_from_margins(&cand_margins);
                (s, s + lambda * l1(&cand))
            }
            StepSize::Backtracking => {
                // Allow the step to grow again after a flat stretch.
                lipschitz *= 0.5;
                loop {
                    let step = 1.0 / lipschitz;
                    prox_step(&w, &grad, step, lambda, &mut cand);
                    loss.margins_into(&cand, &mut cand_margins);
                    let s = loss.value_from_margins(&cand_margins);
                    let total = s + lambda * l1(&cand);
                    let mut lin = 0.0;
                    let mut sq = 0.0;
                    for ((c, x), g) in cand.iter().zip(&w).zip(&grad) {
                        let diff = c - x;
                        lin += g * diff;
                        sq += diff * diff;
                    }
                    let majorized = s <= f_smooth + lin + 0.5 * lipschitz * sq;
                    if majorized && total <= f_total {
                        break (s, total);
                    }
                    lipschitz *= 2.0;
                    if lipschitz > MAX_LIPSCHITZ {
                        // No step lowers the objective: w is stationary up to rounding.
                        return Ok((w, trace, true));
                    }
                }
            }
        };

        if !cand_total.is_finite() {
            return Err(ProbeError::NonFiniteObjective(iter));
        }
        let decrease = f_total - cand_total;
        std::mem::swap(&mut w, &mut cand);
        std::mem::swap(&mut margins, &mut cand_margins);
        f_smooth = cand_smooth;
        f_total = cand_total;
        trace.push(f_total);
        if decrease < config.tolerance && decrease >= 0.0 {
            return Ok((w, trace, true));
        }
    }
    Ok((w, trace, false))
}

fn prox_step(w: &[f64], grad: &[f64], step: f64, lambda: f64, out: &mut [f64]) {
    let thresh = step * lambda;
    for ((o, x), g) in out.iter_mut().zip(w).zip(grad) {
        *o = soft_threshold(x - step * g, thresh);
    }
}

/// Held-out performance of a probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub auroc: f64,
    pub auprc: f64,
}

/// Accuracy at `threshold` (score ≥ threshold predicts 1) plus AUROC and
/// AUPRC on the raw decision values. Errors when a class is missing.
pub fn evaluate(probe: &ProbeWeights, dataset: &ProbeDataset, threshold: f64) -> Result<Evaluation, ProbeError> {
    if dataset.is_empty() {
        return Err(MetricError::Empty.into());
    }
    if dataset.dim() != probe.dim() {
        return Err(ProbeError::DimensionMismatch {
            expected: probe.dim(),
            got: dataset.dim(),
        });
    }
    let logits = dataset
        .rows()
        .map(|x| probe.decision_value(x))
        .collect::<Result<Vec<_>, _>>()?;
    let predictions: Vec<u8> = logits.iter().map(|&z| (sigmoid(z) >= threshold) as u8).collect();
    Ok(Evaluation {
        accuracy: metrics::accuracy(&predictions, &dataset.labels)?,
        auroc: metrics::auroc(&logits, &dataset.labels)?,
        auprc: metrics::auprc(&logits, &dataset.labels)?,
    })
}
