//! Independent oracles shared by the integration and acceptance tests. None
//! of these call into the code paths they check.

#![allow(dead_code)]

use kcprobe::store::{LayerKind, ProbeDataset, SliceMeta, TaskKind};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive, Zero};

/// All (positive, negative) pairs: 1 if concordant, 1/2 if tied.
pub fn auroc_pairs(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut credit = 0.0;
    let mut pairs = 0usize;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] == 0 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1;
            if si > sj {
                credit += 1.0;
            } else if si == sj {
                credit += 0.5;
            }
        }
    }
    (pairs > 0).then(|| credit / pairs as f64)
}

/// Sweeps every distinct score as a threshold (descending), recounting
/// TP/FP from scratch at each one, and accumulates Δrecall × precision.
pub fn auprc_sweep(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let positives = labels.iter().filter(|&&y| y != 0).count();
    if positives == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, y)| **s >= t && **y != 0).count();
        let fp = scores.iter().zip(labels).filter(|(s, y)| **s >= t && **y == 0).count();
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(ap)
}

fn exact(v: f64) -> BigRational {
    BigRational::from_f64(v).expect("finite")
}

/// Population excess kurtosis in exact rational arithmetic.
pub fn kurtosis_exact(x: &[f64]) -> f64 {
    let n = BigRational::from_integer(BigInt::from(x.len()));
    let xs: Vec<BigRational> = x.iter().map(|&v| exact(v)).collect();
    let mean = xs.iter().fold(BigRational::zero(), |a, b| a + b) / &n;
    let mut m2 = BigRational::zero();
    let mut m4 = BigRational::zero();
    for v in &xs {
        let c = v - &mean;
        let c2 = &c * &c;
        m4 += &c2 * &c2;
        m2 += c2;
    }
    m2 /= &n;
    m4 /= &n;
    let k = m4 / (&m2 * &m2) - BigRational::from_integer(BigInt::from(3));
    k.to_f64().expect("representable")
}

/// Hoyer measure from its definition, with sums accumulated in exact
/// rationals and only the square roots taken in floating point.
pub fn hoyer_formula(x: &[f64]) -> f64 {
    let l1 = x
        .iter()
        .map(|&v| exact(v.abs()))
        .fold(BigRational::zero(), |a, b| a + b);
    let l2sq = x
        .iter()
        .map(|&v| exact(v) * exact(v))
        .fold(BigRational::zero(), |a, b| a + b);
    let l1 = l1.to_f64().unwrap();
    let l2 = l2sq.to_f64().unwrap().sqrt();
    let sd = (x.len() as f64).sqrt();
    (sd - l1 / l2) / (sd - 1.0)
}

/// Gini as mean absolute difference over twice the mean, which equals the
/// sorted-rank formula: Σ_i Σ_j |v_i − v_j| / (2 d Σ v).
pub fn gini_pairs(x: &[f64]) -> f64 {
    let v: Vec<f64> = x.iter().map(|a| a.abs()).collect();
    let total: f64 = v.iter().sum();
    let mut diff = 0.0;
    for a in &v {
        for b in &v {
            diff += (a - b).abs();
        }
    }
    diff / (2.0 * v.len() as f64 * total)
}

/// Mean logistic loss evaluated directly from its definition.
pub fn mean_nll(rows: &[Vec<f64>], labels: &[u8], w: &[f64]) -> f64 {
    let mut total = 0.0;
    for (x, &y) in rows.iter().zip(labels) {
        let z: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
        let p = 1.0 / (1.0 + (-z).exp());
        total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    total / rows.len() as f64
}

pub fn central_difference(rows: &[Vec<f64>], labels: &[u8], w: &[f64], h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|j| {
            let mut plus = w.to_vec();
            let mut minus = w.to_vec();
            plus[j] += h;
            minus[j] -= h;
            (mean_nll(rows, labels, &plus) - mean_nll(rows, labels, &minus)) / (2.0 * h)
        })
        .collect()
}

/// Dense grid search of mean NLL + λ‖w‖₁ over `[-half, half]²`.
pub fn grid_minimizer(rows: &[Vec<f64>], labels: &[u8], lambda: f64, half: f64, step: f64) -> [f64; 2] {
    let k = (half / step).round() as i64;
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for a in -k..=k {
        for b in -k..=k {
            let w = [a as f64 * step, b as f64 * step];
            let f = mean_nll(rows, labels, &w) + lambda * (w[0].abs() + w[1].abs());
            if f < best.0 {
                best = (f, w);
            }
        }
    }
    best.1
}

pub fn four_point() -> (Vec<Vec<f64>>, Vec<u8>) {
    (
        vec![vec![1.0, 0.0], vec![0.9, 0.1], vec![-1.0, 0.0], vec![-0.9, -0.1]],
        vec![1, 1, 0, 0],
    )
}

pub fn dataset(rows: &[Vec<f64>], labels: &[u8]) -> ProbeDataset {
    let keys = (0..rows.len()).map(|i| format!("q{i}")).collect();
    let meta = SliceMeta {
        task: TaskKind::ConflictDetection,
        layer: 0,
        kind: LayerKind::Hidden,
    };
    ProbeDataset::from_rows(rows, labels.to_vec(), keys, meta)
}

/// Sample mean and (n−1) std, computed naively.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}
