//! Activation dumps: the on-disk container of final-position residual-stream
//! vectors, and the probe datasets sliced out of them.
//!
//! A dump holds, for every instance, one vector per `(layer, kind)` pair,
//! stored layer-major and then in the header's kind order.

mod dataset;
mod format;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{build_probe_dataset, split_by_question, ProbeDataset, SliceMeta, TaskKind};
pub use format::{read_dump, write_dump, DUMP_MAGIC, DUMP_VERSION};

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("bad magic: expected \"ACPD\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0} (this build reads version 1)")]
    UnsupportedVersion(u32),
    #[error("truncated payload in {0}")]
    Truncated(String),
    #[error("truncated payload at record {index}")]
    TruncatedRecord { index: u64 },
    #[error("invalid metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("shape mismatch at record {index}: {detail}")]
    ShapeMismatch { index: usize, detail: String },
    #[error("non-finite activation in record {index} (layer {layer}, kind {kind}, component {component})")]
    NonFinite {
        index: usize,
        layer: usize,
        kind: LayerKind,
        component: usize,
    },
    #[error("duplicate instance_id {0:?}")]
    DuplicateId(String),
    #[error("invalid {field} code {code} at record {index}")]
    InvalidCode { field: &'static str, code: u8, index: u64 },
    #[error("invalid UTF-8 in record {index}")]
    Utf8 { index: u64 },
    #[error("{0} trailing bytes after last record")]
    TrailingBytes(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Where in a transformer block an activation was captured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    /// Residual stream after the block (h).
    Hidden,
    /// Attention-block output (a).
    Attn,
    /// MLP-block output (m).
    Mlp,
}

impl LayerKind {
    pub const ALL: [LayerKind; 3] = [LayerKind::Hidden, LayerKind::Attn, LayerKind::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Hidden => "hidden",
            LayerKind::Attn => "attn",
            LayerKind::Mlp => "mlp",
        }
    }

    /// Single-letter residual-stream symbol: h, a or m.
    pub fn symbol(self) -> char {
        match self {
            LayerKind::Hidden => 'h',
            LayerKind::Attn => 'a',
            LayerKind::Mlp => 'm',
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "hidden" | "h" => Ok(LayerKind::Hidden),
            "attn" | "a" => Ok(LayerKind::Attn),
            "mlp" | "m" => Ok(LayerKind::Mlp),
            other => Err(format!("unknown layer kind {other:?} (expected hidden, attn or mlp)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceGroup {
    /// Prompted with memory-consistent evidence.
    WithEM,
    /// Prompted with conflicting evidence.
    WithEC,
}

impl EvidenceGroup {
    pub fn code(self) -> u8 {
        match self {
            EvidenceGroup::WithEM => 0,
            EvidenceGroup::WithEC => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EvidenceGroup::WithEM),
            1 => Some(EvidenceGroup::WithEC),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerGroup {
    MatchedAM,
    MatchedAC,
    Unmatched,
}

impl AnswerGroup {
    pub fn code(self) -> u8 {
        match self {
            AnswerGroup::MatchedAM => 0,
            AnswerGroup::MatchedAC => 1,
            AnswerGroup::Unmatched => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(AnswerGroup::MatchedAM),
            1 => Some(AnswerGroup::MatchedAC),
            2 => Some(AnswerGroup::Unmatched),
            _ => None,
        }
    }
}

/// Dump-level metadata, serialized as the JSON block of the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub model_name: String,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub kinds: Vec<LayerKind>,
    pub dataset_name: String,
    pub prompt_template_id: String,
    pub created_utc: String,
    /// Keys beyond the required set (e.g. the harness's capture convention).
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl DumpHeader {
    pub fn new(model_name: impl Into<String>, num_layers: usize, hidden_dim: usize, kinds: Vec<LayerKind>) -> Self {
        DumpHeader {
            model_name: model_name.into(),
            num_layers,
            hidden_dim,
            kinds,
            dataset_name: String::new(),
            prompt_template_id: String::new(),
            created_utc: String::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), DumpError> {
        if self.num_layers < 1 {
            return Err(DumpError::InvalidHeader("num_layers must be at least 1".into()));
        }
        if self.hidden_dim < 2 {
            return Err(DumpError::InvalidHeader(format!(
                "hidden_dim must be at least 2, got {}",
                self.hidden_dim
            )));
        }
        if self.kinds.is_empty() {
            return Err(DumpError::InvalidHeader("kinds is empty".into()));
        }
        let mut seen = HashSet::new();
        for k in &self.kinds {
            if !seen.insert(*k) {
                return Err(DumpError::InvalidHeader(format!("duplicate kind {k}")));
            }
        }
        Ok(())
    }

    /// Number of `f32` values in one record's activation payload.
    pub fn values_per_record(&self) -> usize {
        self.num_layers * self.kinds.len() * self.hidden_dim
    }

    pub fn kind_index(&self, kind: LayerKind) -> Option<usize> {
        self.kinds.iter().position(|&k| k == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub instance_id: String,
    pub question_key: String,
    pub evidence_group: EvidenceGroup,
    pub answer_group: AnswerGroup,
    /// Flat `[layer][kind][dim]` payload.
    pub activations: Vec<f32>,
}

impl InstanceRecord {
    /// The vector for one `(layer, kind slot)`; `kind_slot` indexes the
    /// header's `kinds` list.
    pub fn activation(&self, header: &DumpHeader, layer: usize, kind_slot: usize) -> &[f32] {
        let d = header.hidden_dim;
        let start = (layer * header.kinds.len() + kind_slot) * d;
        &self.activations[start..start + d]
    }

    fn check_shape(&self, header: &DumpHeader, index: usize) -> Result<(), DumpError> {
        let want = header.values_per_record();
        if self.activations.len() != want {
            return Err(DumpError::ShapeMismatch {
                index,
                detail: format!(
                    "{} values, expected {} layers x {} kinds x {} dims = {want}",
                    self.activations.len(),
                    header.num_layers,
                    header.kinds.len(),
                    header.hidden_dim
                ),
            });
        }
        if let Some(pos) = self.activations.iter().position(|v| !v.is_finite()) {
            let d = header.hidden_dim;
            let slot = pos / d;
            return Err(DumpError::NonFinite {
                index,
                layer: slot / header.kinds.len(),
                kind: header.kinds[slot % header.kinds.len()],
                component: pos % d,
            });
        }
        Ok(())
    }
}

/// A loaded dump. Immutable once built; share it by reference across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub header: DumpHeader,
    pub records: Vec<InstanceRecord>,
}

impl Dump {
    /// Validates the header, every record's shape and finiteness, and
    /// instance_id uniqueness.
    pub fn new(header: DumpHeader, records: Vec<InstanceRecord>) -> Result<Self, DumpError> {
        validate_records(&header, &records)?;
        Ok(Dump { header, records })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, DumpError> {
        let file = std::fs::File::open(path)?;
        let (header, records) = read_dump(std::io::BufReader::new(file))?;
        Ok(Dump { header, records })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<u64, DumpError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        let n = write_dump(&self.header, &self.records, &mut w)?;
        std::io::Write::flush(&mut w)?;
        Ok(n)
    }

    pub fn count(&self, evidence: EvidenceGroup) -> usize {
        self.records.iter().filter(|r| r.evidence_group == evidence).count()
    }
}

pub(crate) fn validate_records(header: &DumpHeader, records: &[InstanceRecord]) -> Result<(), DumpError> {
    header.validate()?;
    let mut ids = HashSet::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        r.check_shape(header, i)?;
        if !ids.insert(r.instance_id.as_str()) {
            return Err(DumpError::DuplicateId(r.instance_id.clone()));
        }
    }
    Ok(())
}
