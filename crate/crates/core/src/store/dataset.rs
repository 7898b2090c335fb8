use std::collections::HashSet;
use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AnswerGroup, Dump, EvidenceGroup, LayerKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("layer {layer} out of range (dump has {num_layers} layers)")]
    LayerOutOfRange { layer: usize, num_layers: usize },
    #[error("kind {0} absent from dump")]
    KindAbsent(LayerKind),
    #[error("empty class: {positives} positives, {negatives} negatives")]
    EmptyClass { positives: usize, negatives: usize },
    #[error("train fraction {0} not in (0, 1)")]
    InvalidFraction(f64),
    #[error("need at least 2 distinct questions to split, found {0}")]
    TooFewQuestions(usize),
    #[error("{side} split is single-class ({positives} positives, {negatives} negatives)")]
    SingleClassSplit {
        side: &'static str,
        positives: usize,
        negatives: usize,
    },
}

/// Which binary question a probe answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// with_e_M → 0, with_e_C → 1, over every record.
    ConflictDetection,
    /// Over with_e_C records that matched an answer: matched_a_M → 0,
    /// matched_a_C → 1.
    SourceSelection,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::ConflictDetection => "conflict_detection",
            TaskKind::SourceSelection => "source_selection",
        }
    }

    /// Short form used on the command line and in file names.
    pub fn short_name(self) -> &'static str {
        match self {
            TaskKind::ConflictDetection => "conflict",
            TaskKind::SourceSelection => "selection",
        }
    }

    /// The label for a record, or `None` when the record is excluded.
    pub fn label(self, evidence: EvidenceGroup, answer: AnswerGroup) -> Option<u8> {
        match self {
            TaskKind::ConflictDetection => Some(evidence.code()),
            TaskKind::SourceSelection => match (evidence, answer) {
                (EvidenceGroup::WithEC, AnswerGroup::MatchedAM) => Some(0),
                (EvidenceGroup::WithEC, AnswerGroup::MatchedAC) => Some(1),
                _ => None,
            },
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "conflict" | "conflict_detection" => Ok(TaskKind::ConflictDetection),
            "selection" | "source_selection" => Ok(TaskKind::SourceSelection),
            other => Err(format!("unknown task {other:?} (expected conflict or selection)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceMeta {
    pub task: TaskKind,
    pub layer: usize,
    pub kind: LayerKind,
}

/// Design matrix plus binary labels for one `(task, layer, kind)` slice.
/// Rows follow dump order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    features: Vec<f64>,
    dim: usize,
    pub labels: Vec<u8>,
    pub question_keys: Vec<String>,
    pub meta: SliceMeta,
}

impl ProbeDataset {
    /// Builds a dataset from explicit rows. Panics if rows are ragged or the
    /// column lengths disagree.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>, question_keys: Vec<String>, meta: SliceMeta) -> Self {
        assert_eq!(rows.len(), labels.len(), "rows vs labels");
        assert_eq!(rows.len(), question_keys.len(), "rows vs question keys");
        let dim = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "ragged rows");
            features.extend_from_slice(r);
        }
        ProbeDataset {
            features,
            dim,
            labels,
            question_keys,
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.dim.max(1)).take(self.len())
    }

    /// Row-major `n × d` feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }

    /// `(positives, negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y != 0).count();
        (pos, self.len() - pos)
    }

    fn select(&self, rows: &[usize]) -> ProbeDataset {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        ProbeDataset {
            features,
            dim: self.dim,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            question_keys: rows.iter().map(|&i| self.question_keys[i].clone()).collect(),
            meta: self.meta,
        }
    }
}

/// Slices one `(layer, kind)` out of a dump and labels it for `task`.
pub fn build_probe_dataset(
    dump: &Dump,
    task: TaskKind,
    layer: usize,
    kind: LayerKind,
) -> Result<ProbeDataset, DatasetError> {
    let header = &dump.header;
    if layer >= header.num_layers {
        return Err(DatasetError::LayerOutOfRange {
            layer,
            num_layers: header.num_layers,
        });
    }
    let slot = header.kind_index(kind).ok_or(DatasetError::KindAbsent(kind))?;
    let d = header.hidden_dim;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut question_keys = Vec::new();
    for r in &dump.records {
        let Some(y) = task.label(r.evidence_group, r.answer_group) else {
            continue;
        };
        features.extend(r.activation(header, layer, slot).iter().map(|&v| v as f64));
        labels.push(y);
        question_keys.push(r.question_key.clone());
    }
    let ds = ProbeDataset {
        features,
        dim: d,
        labels,
        question_keys,
        meta: SliceMeta { task, layer, kind },
    };
    let (positives, negatives) = ds.class_counts();
    if positives == 0 || negatives == 0 {
        return Err(DatasetError::EmptyClass { positives, negatives });
    }
    Ok(ds)
}

/// Deterministic position of a question in `[0, 1)` for a given seed:
/// FNV-1a 64 over the key's UTF-8 bytes followed by the seed as u64 LE,
/// top 53 bits scaled by 2⁻⁵³.
pub fn question_hash_unit(question_key: &str, seed: u64) -> f64 {
    let mut h = FnvHasher::default();
    h.write(question_key.as_bytes());
    h.write(&seed.to_le_bytes());
    (h.finish() >> 11) as f64 / (1u64 << 53) as f64
}

/// Splits by question so no question appears on both sides. A question goes
/// to the training side iff its hash position is below `train_fraction`.
pub fn split_by_question(
    dataset: &ProbeDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(ProbeDataset, ProbeDataset), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    let distinct: HashSet<&str> = dataset.question_keys.iter().map(String::as_str).collect();
    if distinct.len() < 2 {
        return Err(DatasetError::TooFewQuestions(distinct.len()));
    }
    let (train_rows, test_rows): (Vec<usize>, Vec<usize>) =
        (0..dataset.len()).partition(|&i| question_hash_unit(&dataset.question_keys[i], seed) < train_fraction);
    let train = dataset.select(&train_rows);
    let test = dataset.select(&test_rows);
    for (side, part) in [("train", &train), ("test", &test)] {
        let (positives, negatives) = part.class_counts();
        if positives == 0 || negatives == 0 {
            return Err(DatasetError::SingleClassSplit {
                side,
                positives,
                negatives,
            });
        }
    }
    Ok((train, test))
}
