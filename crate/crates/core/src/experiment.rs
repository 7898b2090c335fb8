//! Layer × kind × seed probing sweeps and group-wise shape analyses,
//! aggregated into per-layer mean ± std curves.
//!
//! Every sweep is split into independent slice tasks that run on a bounded
//! rayon pool. Results are collected in task order and reduced in fixed
//! `(layer, kind, seed)` order, so the curves do not depend on the pool width.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricError, MetricKind};
use crate::probe::{self, ProbeError, ProbeWeights, TrainConfig};
use crate::store::{
    build_probe_dataset, split_by_question, AnswerGroup, Dump, EvidenceGroup, LayerKind, ProbeDataset, TaskKind,
};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SEEDS: u64 = 20;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error("kind {0} absent from dump")]
    KindAbsent(LayerKind),
    #[error("behaviour group {0} is empty")]
    EmptyGroup(BehaviourGroup),
    #[error("{metric} failed on record {record} at layer {layer} ({kind}): {source}")]
    Shape {
        metric: MetricKind,
        record: usize,
        layer: usize,
        kind: LayerKind,
        source: MetricError,
    },
    #[error("no curves to emit")]
    NoCurves,
    #[error("every slice of the {0} curve is absent")]
    AllAbsent(MetricKind),
    #[error("malformed curve CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed curve CSV: {0}")]
    CsvField(String),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which instances a curve was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BehaviourGroup {
    /// All instances prompted with memory-consistent evidence.
    WithEM,
    /// All instances prompted with conflicting evidence.
    WithEC,
    /// Conflicting evidence, answer aligned with the context.
    ContextualAnswer,
    /// Conflicting evidence, answer aligned with parametric memory.
    ParametricAnswer,
}

impl BehaviourGroup {
    pub fn name(self) -> &'static str {
        match self {
            BehaviourGroup::WithEM => "with_e_M",
            BehaviourGroup::WithEC => "with_e_C",
            BehaviourGroup::ContextualAnswer => "e_C_a_C",
            BehaviourGroup::ParametricAnswer => "e_C_a_M",
        }
    }

    pub fn contains(self, evidence: EvidenceGroup, answer: AnswerGroup) -> bool {
        match self {
            BehaviourGroup::WithEM => evidence == EvidenceGroup::WithEM,
            BehaviourGroup::WithEC => evidence == EvidenceGroup::WithEC,
            BehaviourGroup::ContextualAnswer => evidence == EvidenceGroup::WithEC && answer == AnswerGroup::MatchedAC,
            BehaviourGroup::ParametricAnswer => evidence == EvidenceGroup::WithEC && answer == AnswerGroup::MatchedAM,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            BehaviourGroup::WithEM,
            BehaviourGroup::WithEC,
            BehaviourGroup::ContextualAnswer,
            BehaviourGroup::ParametricAnswer,
        ]
        .into_iter()
        .find(|g| g.name() == s)
    }
}

impl fmt::Display for BehaviourGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How shape analysis partitions records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// Contextual-answer vs parametric-answer among with_e_C records.
    Selection,
    /// with_e_C vs with_e_M.
    Evidence,
}

impl Grouping {
    pub fn groups(self) -> [BehaviourGroup; 2] {
        match self {
            Grouping::Selection => [BehaviourGroup::ContextualAnswer, BehaviourGroup::ParametricAnswer],
            Grouping::Evidence => [BehaviourGroup::WithEC, BehaviourGroup::WithEM],
        }
    }
}

impl FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "selection" => Ok(Grouping::Selection),
            "evidence" => Ok(Grouping::Evidence),
            other => Err(format!("unknown grouping {other:?} (expected selection or evidence)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LayerSelection {
    #[default]
    All,
    List(Vec<usize>),
}

impl LayerSelection {
    pub fn resolve(&self, num_layers: usize) -> Result<Vec<usize>, ExperimentError> {
        match self {
            LayerSelection::All => Ok((0..num_layers).collect()),
            LayerSelection::List(layers) => {
                let mut seen = HashSet::new();
                for &l in layers {
                    if l >= num_layers {
                        return Err(ExperimentError::InvalidConfig(format!(
                            "layer {l} out of range (dump has {num_layers})"
                        )));
                    }
                    if !seen.insert(l) {
                        return Err(ExperimentError::InvalidConfig(format!("layer {l} listed twice")));
                    }
                }
                let mut out = layers.clone();
                out.sort_unstable();
                Ok(out)
            }
        }
    }
}

impl FromStr for LayerSelection {
    type Err = String;

    /// `all`, `a-b` (inclusive), or a comma list mixing both forms.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "all" {
            return Ok(LayerSelection::All);
        }
        let mut out = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            let bad = || format!("bad layer spec {part:?}");
            if let Some((a, b)) = part.split_once('-') {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            } else {
                out.push(part.parse().map_err(|_| bad())?);
            }
        }
        Ok(LayerSelection::List(out))
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub task: TaskKind,
    pub layers: LayerSelection,
    pub kinds: Vec<LayerKind>,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub probe: TrainConfig,
    pub threshold: f64,
    /// Worker-pool width; 0 means one worker per available core.
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            task: TaskKind::ConflictDetection,
            layers: LayerSelection::All,
            kinds: vec![LayerKind::Hidden],
            seeds: (0..DEFAULT_SEEDS).collect(),
            train_fraction: DEFAULT_TRAIN_FRACTION,
            probe: TrainConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            jobs: 0,
        }
    }
}

/// Mean, sample standard deviation and count of one slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    /// `None` for an empty sample. A single value has std 0.
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub layer: usize,
    pub kind: LayerKind,
    /// `None` when the slice is absent.
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricCurve {
    pub metric: MetricKind,
    pub group: Option<BehaviourGroup>,
    pub points: Vec<CurvePoint>,
}

impl MetricCurve {
    pub fn point(&self, layer: usize, kind: LayerKind) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.layer == layer && p.kind == kind)
    }

    pub fn mean_at(&self, layer: usize, kind: LayerKind) -> Option<f64> {
        self.point(layer, kind).and_then(|p| p.summary).map(|s| s.mean)
    }
}

/// Why a slice, or one seed of it, produced no numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceFailure {
    pub layer: usize,
    pub kind: LayerKind,
    /// `None` when the whole slice failed before splitting.
    pub seed: Option<u64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub layer: usize,
    pub kind: LayerKind,
    pub seed: u64,
    pub accuracy: f64,
    pub auroc: f64,
    pub auprc: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// Accuracy, AUROC and AUPRC curves, in that order.
    pub curves: Vec<MetricCurve>,
    /// Trained probes in `(layer, kind, seed)` order.
    pub probes: Vec<ProbeWeights>,
    pub per_seed: Vec<SeedResult>,
    pub failures: Vec<SliceFailure>,
}

impl SweepOutput {
    pub fn curve(&self, metric: MetricKind) -> Option<&MetricCurve> {
        self.curves.iter().find(|c| c.metric == metric)
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

fn check_kinds(dump: &Dump, kinds: &[LayerKind]) -> Result<(), ExperimentError> {
    if kinds.is_empty() {
        return Err(ExperimentError::InvalidConfig("no kinds selected".into()));
    }
    let mut seen = HashSet::new();
    for &k in kinds {
        if dump.header.kind_index(k).is_none() {
            return Err(ExperimentError::KindAbsent(k));
        }
        if !seen.insert(k) {
            return Err(ExperimentError::InvalidConfig(format!("kind {k} listed twice")));
        }
    }
    Ok(())
}

fn sorted_kinds(kinds: &[LayerKind]) -> Vec<LayerKind> {
    let mut k = kinds.to_vec();
    k.sort();
    k
}

enum SeedOutcome {
    Done(Box<ProbeWeights>, SeedResult),
    Failed(SliceFailure),
}

fn run_seed(data: &ProbeDataset, config: &SweepConfig, seed: u64) -> SeedOutcome {
    let (layer, kind) = (data.meta.layer, data.meta.kind);
    let fail = |reason: String| {
        SeedOutcome::Failed(SliceFailure {
            layer,
            kind,
            seed: Some(seed),
            reason,
        })
    };
    let (train, test) = match split_by_question(data, config.train_fraction, seed) {
        Ok(parts) => parts,
        Err(e) => return fail(e.to_string()),
    };
    let probe_config = TrainConfig {
        seed,
        ..config.probe.clone()
    };
    let trained = match probe::train(&train, &probe_config) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string()),
    };
    match probe::evaluate(&trained.probe, &test, config.threshold) {
        Ok(ev) => SeedOutcome::Done(
            Box::new(trained.probe),
            SeedResult {
                layer,
                kind,
                seed,
                accuracy: ev.accuracy,
                auroc: ev.auroc,
                auprc: ev.auprc,
            },
        ),
        Err(e) => fail(e.to_string()),
    }
}

fn validate_sweep(dump: &Dump, config: &SweepConfig) -> Result<Vec<(usize, LayerKind)>, ExperimentError> {
    if config.seeds.is_empty() {
        return Err(ExperimentError::InvalidConfig("seed list is empty".into()));
    }
    let distinct: HashSet<_> = config.seeds.iter().collect();
    if distinct.len() != config.seeds.len() {
        return Err(ExperimentError::InvalidConfig("seed list has duplicates".into()));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(ExperimentError::InvalidConfig(format!(
            "train fraction {} not in (0, 1)",
            config.train_fraction
        )));
    }
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(ExperimentError::InvalidConfig(format!(
            "threshold {} not in [0, 1]",
            config.threshold
        )));
    }
    config
        .probe
        .validate()
        .map_err(|e: ProbeError| ExperimentError::InvalidConfig(e.to_string()))?;
    check_kinds(dump, &config.kinds)?;
    let layers = config.layers.resolve(dump.header.num_layers)?;
    let kinds = sorted_kinds(&config.kinds);
    Ok(layers
        .iter()
        .flat_map(|&l| kinds.iter().map(move |&k| (l, k)))
        .collect())
}

/// Trains one probe per `(layer, kind, seed)` on the seed's question-disjoint
/// training side, evaluates it on the held-out side, and aggregates across
/// seeds. Slices whose dataset or split is unusable are reported in
/// `failures` and left absent on the curves.
pub fn run_probe_sweep(dump: &Dump, config: &SweepConfig) -> Result<SweepOutput, ExperimentError> {
    let slices = validate_sweep(dump, config)?;
    let seeds = &config.seeds;

    with_pool(config.jobs, || {
        let datasets: Vec<Result<ProbeDataset, String>> = slices
            .par_iter()
            .map(|&(layer, kind)| build_probe_dataset(dump, config.task, layer, kind).map_err(|e| e.to_string()))
            .collect();

        let tasks: Vec<(usize, u64)> = (0..slices.len())
            .filter(|&i| datasets[i].is_ok())
            .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
            .collect();
        let outcomes: Vec<SeedOutcome> = tasks
            .par_iter()
            .map(|&(i, seed)| {
                let data = datasets[i].as_ref().expect("filtered to ok datasets");
                run_seed(data, config, seed)
            })
            .collect();

        let mut failures = Vec::new();
        let mut probes = Vec::new();
        let mut per_seed = Vec::new();
        let mut by_slice: BTreeMap<usize, Vec<SeedResult>> = BTreeMap::new();
        for (i, ds) in datasets.iter().enumerate() {
            if let Err(reason) = ds {
                let (layer, kind) = slices[i];
                failures.push(SliceFailure {
                    layer,
                    kind,
                    seed: None,
                    reason: reason.clone(),
                });
            }
        }
        for (&(i, _), outcome) in tasks.iter().zip(outcomes) {
            match outcome {
                SeedOutcome::Done(p, r) => {
                    probes.push(*p);
                    by_slice.entry(i).or_default().push(r.clone());
                    per_seed.push(r);
                }
                SeedOutcome::Failed(f) => failures.push(f),
            }
        }

        let curve = |metric: MetricKind, pick: fn(&SeedResult) -> f64| MetricCurve {
            metric,
            group: None,
            points: slices
                .iter()
                .enumerate()
                .map(|(i, &(layer, kind))| CurvePoint {
                    layer,
                    kind,
                    summary: by_slice
                        .get(&i)
                        .and_then(|rs| Summary::of(&rs.iter().map(pick).collect::<Vec<_>>())),
                })
                .collect(),
        };
        SweepOutput {
            curves: vec![
                curve(MetricKind::Accuracy, |r| r.accuracy),
                curve(MetricKind::Auroc, |r| r.auroc),
                curve(MetricKind::Auprc, |r| r.auprc),
            ],
            probes,
            per_seed,
            failures,
        }
    })
}

/// [`run_probe_sweep`] for the knowledge-source task.
pub fn run_selection_sweep(dump: &Dump, config: &SweepConfig) -> Result<SweepOutput, ExperimentError> {
    let config = SweepConfig {
        task: TaskKind::SourceSelection,
        ..config.clone()
    };
    run_probe_sweep(dump, &config)
}

/// Evaluates already-trained probes on the held-out side of their own seed's
/// split and aggregates them like a sweep. Probes are reduced in
/// `(layer, kind, seed)` order whatever order they arrive in.
pub fn evaluate_probes(
    dump: &Dump,
    probes: &[ProbeWeights],
    train_fraction: f64,
    threshold: f64,
    jobs: usize,
) -> Result<SweepOutput, ExperimentError> {
    let mut order: Vec<&ProbeWeights> = probes.iter().collect();
    order.sort_by_key(|p| (p.meta.task, p.meta.layer, p.meta.kind, p.meta.seed));
    let mut slices: Vec<(TaskKind, usize, LayerKind)> =
        order.iter().map(|p| (p.meta.task, p.meta.layer, p.meta.kind)).collect();
    slices.dedup();

    with_pool(jobs, || {
        let datasets: Vec<Result<ProbeDataset, String>> = slices
            .par_iter()
            .map(|&(task, layer, kind)| build_probe_dataset(dump, task, layer, kind).map_err(|e| e.to_string()))
            .collect();
        let results: Vec<Result<SeedResult, SliceFailure>> = order
            .par_iter()
            .map(|p| {
                let m = &p.meta;
                let fail = |reason: String| SliceFailure {
                    layer: m.layer,
                    kind: m.kind,
                    seed: Some(m.seed),
                    reason,
                };
                let i = slices
                    .iter()
                    .position(|s| *s == (m.task, m.layer, m.kind))
                    .expect("slice listed");
                let data = datasets[i].as_ref().map_err(|e| fail(e.clone()))?;
                let (_, test) = split_by_question(data, train_fraction, m.seed).map_err(|e| fail(e.to_string()))?;
                let ev = probe::evaluate(p, &test, threshold).map_err(|e| fail(e.to_string()))?;
                Ok(SeedResult {
                    layer: m.layer,
                    kind: m.kind,
                    seed: m.seed,
                    accuracy: ev.accuracy,
                    auroc: ev.auroc,
                    auprc: ev.auprc,
                })
            })
            .collect();

        let mut failures = Vec::new();
        let mut per_seed = Vec::new();
        let mut by_slice: BTreeMap<usize, Vec<SeedResult>> = BTreeMap::new();
        for (p, r) in order.iter().zip(results) {
            let i = slices
                .iter()
                .position(|s| *s == (p.meta.task, p.meta.layer, p.meta.kind))
                .expect("slice listed");
            match r {
                Ok(r) => {
                    by_slice.entry(i).or_default().push(r.clone());
                    per_seed.push(r);
                }
                Err(f) => failures.push(f),
            }
        }
        let curve = |metric: MetricKind, pick: fn(&SeedResult) -> f64| MetricCurve {
            metric,
            group: None,
            points: slices
                .iter()
                .enumerate()
                .map(|(i, &(_, layer, kind))| CurvePoint {
                    layer,
                    kind,
                    summary: by_slice
                        .get(&i)
                        .and_then(|rs| Summary::of(&rs.iter().map(pick).collect::<Vec<_>>())),
                })
                .collect(),
        };
        SweepOutput {
            curves: vec![
                curve(MetricKind::Accuracy, |r| r.accuracy),
                curve(MetricKind::Auroc, |r| r.auroc),
                curve(MetricKind::Auprc, |r| r.auprc),
            ],
            probes: order.into_iter().cloned().collect(),
            per_seed,
            failures,
        }
    })
}

#[derive(Debug, Clone)]
pub struct ShapeConfig {
    pub metrics: Vec<MetricKind>,
    pub grouping: Grouping,
    pub layers: LayerSelection,
    pub kinds: Vec<LayerKind>,
    pub jobs: usize,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        ShapeConfig {
            metrics: vec![MetricKind::ExcessKurtosis, MetricKind::Hoyer, MetricKind::Gini],
            grouping: Grouping::Selection,
            layers: LayerSelection::All,
            kinds: vec![LayerKind::Hidden],
            jobs: 0,
        }
    }
}

/// Computes each shape metric per record per `(layer, kind)`, then mean ± std
/// within each behaviour group. One curve per `(metric, group)`.
pub fn run_shape_analysis(dump: &Dump, config: &ShapeConfig) -> Result<Vec<MetricCurve>, ExperimentError> {
    if config.metrics.is_empty() {
        return Err(ExperimentError::InvalidConfig("no metrics selected".into()));
    }
    if let Some(m) = config.metrics.iter().find(|m| !m.is_shape()) {
        return Err(ExperimentError::InvalidConfig(format!("{m} is not a shape metric")));
    }
    check_kinds(dump, &config.kinds)?;
    let layers = config.layers.resolve(dump.header.num_layers)?;
    let kinds = sorted_kinds(&config.kinds);
    let groups = config.grouping.groups();
    let members: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            dump.records
                .iter()
                .enumerate()
                .filter(|(_, r)| g.contains(r.evidence_group, r.answer_group))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    for (g, m) in groups.iter().zip(&members) {
        if m.is_empty() {
            return Err(ExperimentError::EmptyGroup(*g));
        }
    }

    let slices: Vec<(usize, LayerKind)> = layers
        .iter()
        .flat_map(|&l| kinds.iter().map(move |&k| (l, k)))
        .collect();
    let header = &dump.header;
    // values[slice][metric][group] -> per-record values
    let values: Vec<Vec<Vec<Vec<f64>>>> = with_pool(config.jobs, || {
        slices
            .par_iter()
            .map(|&(layer, kind)| {
                let slot = header.kind_index(kind).expect("kind checked");
                let mut out = vec![vec![Vec::new(); groups.len()]; config.metrics.len()];
                let mut buf = vec![0.0f64; header.hidden_dim];
                for (gi, rows) in members.iter().enumerate() {
                    for &ri in rows {
                        let src = dump.records[ri].activation(header, layer, slot);
                        for (b, &v) in buf.iter_mut().zip(src) {
                            *b = v as f64;
                        }
                        for (mi, &metric) in config.metrics.iter().enumerate() {
                            let v = metric.shape_value(&buf).expect("shape metric").map_err(|source| {
                                ExperimentError::Shape {
                                    metric,
                                    record: ri,
                                    layer,
                                    kind,
                                    source,
                                }
                            })?;
                            out[mi][gi].push(v);
                        }
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    })??;

    let mut curves = Vec::with_capacity(config.metrics.len() * groups.len());
    for (mi, &metric) in config.metrics.iter().enumerate() {
        for (gi, &group) in groups.iter().enumerate() {
            curves.push(MetricCurve {
                metric,
                group: Some(group),
                points: slices
                    .iter()
                    .enumerate()
                    .map(|(si, &(layer, kind))| CurvePoint {
                        layer,
                        kind,
                        summary: Summary::of(&values[si][mi][gi]),
                    })
                    .collect(),
            });
        }
    }
    Ok(curves)
}

/// Highest-mean point; ties go to the lowest layer, then hidden < attn < mlp.
pub fn best_layer(curve: &MetricCurve) -> Result<(usize, LayerKind), ExperimentError> {
    curve
        .points
        .iter()
        .filter_map(|p| p.summary.map(|s| (s.mean, p.layer, p.kind)))
        .max_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| (b.1, b.2).cmp(&(a.1, a.2)))
        })
        .map(|(_, layer, kind)| (layer, kind))
        .ok_or(ExperimentError::AllAbsent(curve.metric))
}

pub const CURVE_CSV_HEADER: [&str; 7] = ["metric", "group", "kind", "layer", "mean", "std", "n"];

/// Writes curves as CSV rows sorted by `(metric, group, kind, layer)`.
/// Absent slices keep their row with empty mean/std and `n = 0`.
pub fn emit_curves<W: Write>(curves: &[MetricCurve], destination: W) -> Result<u64, ExperimentError> {
    if curves.is_empty() {
        return Err(ExperimentError::NoCurves);
    }
    let mut rows: Vec<(&str, &str, LayerKind, usize, Option<Summary>)> = curves
        .iter()
        .flat_map(|c| {
            let group = c.group.map_or("", BehaviourGroup::name);
            c.points
                .iter()
                .map(move |p| (c.metric.name(), group, p.kind, p.layer, p.summary))
        })
        .collect();
    rows.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));

    let mut counter = CountingWrite {
        inner: destination,
        n: 0,
    };
    {
        let mut w = csv::Writer::from_writer(&mut counter);
        w.write_record(CURVE_CSV_HEADER)?;
        for (metric, group, kind, layer, summary) in rows {
            let (mean, std, n) = match summary {
                Some(s) => (s.mean.to_string(), s.std.to_string(), s.n.to_string()),
                None => (String::new(), String::new(), "0".to_string()),
            };
            w.write_record([metric, group, kind.name(), &layer.to_string(), &mean, &std, &n])?;
        }
        w.flush()?;
    }
    Ok(counter.n)
}

struct CountingWrite<W> {
    inner: W,
    n: u64,
}

impl<W: Write> Write for CountingWrite<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let k = self.inner.write(buf)?;
        self.n += k as u64;
        Ok(k)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

#[derive(Deserialize, Serialize)]
struct CurveRow {
    metric: String,
    group: String,
    kind: String,
    layer: usize,
    mean: Option<f64>,
    std: Option<f64>,
    n: usize,
}

/// Parses the curve CSV back into curves, one per `(metric, group)` in file
/// order.
pub fn read_curves<R: Read>(source: R) -> Result<Vec<MetricCurve>, ExperimentError> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CURVE_CSV_HEADER) {
        return Err(ExperimentError::CsvField(format!("unexpected header {:?}", headers)));
    }
    let mut curves: Vec<MetricCurve> = Vec::new();
    for row in reader.deserialize::<CurveRow>() {
        let row = row?;
        let metric = MetricKind::parse(&row.metric)
            .ok_or_else(|| ExperimentError::CsvField(format!("unknown metric {:?}", row.metric)))?;
        let group = if row.group.is_empty() {
            None
        } else {
            Some(
                BehaviourGroup::parse(&row.group)
                    .ok_or_else(|| ExperimentError::CsvField(format!("unknown group {:?}", row.group)))?,
            )
        };
        let kind: LayerKind = row.kind.parse().map_err(ExperimentError::CsvField)?;
        let summary = match (row.mean, row.std) {
            (Some(mean), Some(std)) => Some(Summary { mean, std, n: row.n }),
            (None, None) => None,
            _ => {
                return Err(ExperimentError::CsvField(
                    "mean and std must be both set or both empty".into(),
                ))
            }
        };
        let point = CurvePoint {
            layer: row.layer,
            kind,
            summary,
        };
        match curves.iter_mut().find(|c| c.metric == metric && c.group == group) {
            Some(c) => c.points.push(point),
            None => curves.push(MetricCurve {
                metric,
                group,
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(means: &[Option<f64>]) -> MetricCurve {
        MetricCurve {
            metric: MetricKind::Auroc,
            group: None,
            points: means
                .iter()
                .enumerate()
                .map(|(layer, m)| CurvePoint {
                    layer,
                    kind: LayerKind::Hidden,
                    summary: m.map(|mean| Summary { mean, std: 0.0, n: 1 }),
                })
                .collect(),
        }
    }

    #[test]
    fn best_layer_argmax_and_ties() {
        assert_eq!(
            best_layer(&curve(&[Some(0.5), Some(0.9), Some(0.7)])).unwrap(),
            (1, LayerKind::Hidden)
        );
        let tie = curve(&[Some(0.1), None, Some(0.2), Some(0.8), Some(0.3), Some(0.8)]);
        assert_eq!(best_layer(&tie).unwrap().0, 3);
        assert!(matches!(
            best_layer(&curve(&[None, None])),
            Err(ExperimentError::AllAbsent(_))
        ));
    }

    #[test]
    fn best_layer_kind_tie_order() {
        let mut c = curve(&[Some(0.4)]);
        for kind in [LayerKind::Mlp, LayerKind::Attn] {
            c.points.push(CurvePoint {
                layer: 0,
                kind,
                summary: Some(Summary {
                    mean: 0.4,
                    std: 0.0,
                    n: 1,
                }),
            });
        }
        c.points.retain(|p| p.kind != LayerKind::Hidden);
        assert_eq!(best_layer(&c).unwrap(), (0, LayerKind::Attn));
    }

    #[test]
    fn summary_sample_std() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Summary::of(&[7.0]).unwrap().std, 0.0);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn emit_two_layers() {
        let mut buf = Vec::new();
        let n = emit_curves(&[curve(&[Some(0.5), Some(0.75)])], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(n as usize, text.len());
        assert_eq!(
            text,
            "metric,group,kind,layer,mean,std,n\nauroc,,hidden,0,0.5,0,1\nauroc,,hidden,1,0.75,0,1\n"
        );
    }

    #[test]
    fn emit_absent_slice_and_sorting() {
        let mut shape = curve(&[Some(0.25), None]);
        shape.metric = MetricKind::Gini;
        shape.group = Some(BehaviourGroup::ParametricAnswer);
        let mut other = shape.clone();
        other.group = Some(BehaviourGroup::ContextualAnswer);
        let mut buf = Vec::new();
        emit_curves(&[shape, curve(&[Some(1.0), Some(0.5)]), other], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "auroc,,hidden,0,1,0,1");
        assert_eq!(lines[3], "gini,e_C_a_C,hidden,0,0.25,0,1");
        assert_eq!(lines[4], "gini,e_C_a_C,hidden,1,,,0");
        assert_eq!(lines[6], "gini,e_C_a_M,hidden,1,,,0");
        let back = read_curves(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[2].points[1].summary, None);
    }

    #[test]
    fn emit_rejects_empty() {
        assert!(matches!(emit_curves(&[], Vec::new()), Err(ExperimentError::NoCurves)));
    }

    #[test]
    fn layer_selection_parsing() {
        assert_eq!("all".parse::<LayerSelection>().unwrap(), LayerSelection::All);
        assert_eq!(
            "3-5,9".parse::<LayerSelection>().unwrap(),
            LayerSelection::List(vec![3, 4, 5, 9])
        );
        assert!("5-3".parse::<LayerSelection>().is_err());
        assert!("x".parse::<LayerSelection>().is_err());
        assert!(LayerSelection::List(vec![1, 1]).resolve(4).is_err());
        assert!(LayerSelection::List(vec![4]).resolve(4).is_err());
        assert_eq!(LayerSelection::List(vec![2, 0]).resolve(4).unwrap(), vec![0, 2]);
    }
}
