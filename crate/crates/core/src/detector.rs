//! Inference-time side-car: scores one final-position activation for
//! knowledge conflict and, when a conflict is flagged, for which knowledge
//! source the model is about to use.

use std::io::{self, BufRead, Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::probe::{ProbeError, ProbeWeights};
use crate::store::{LayerKind, TaskKind};

pub const DEFAULT_LAYER: usize = 14;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("metadata mismatch: {0}")]
    MetadataMismatch(String),
    #[error("{path}: {source}")]
    Load { path: String, source: ProbeError },
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("threshold {0} not in [0, 1]")]
    InvalidThreshold(f64),
    #[error("input ended mid-vector: {0} trailing bytes")]
    PartialVector(usize),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// The model is expected to follow the context.
    Contextual,
    /// The model is expected to answer from its parameters.
    Parametric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub p_conflict: f64,
    pub conflict: bool,
    pub source: Option<Source>,
}

/// A validated pair of probes for one operating point. Immutable and
/// shareable across threads.
#[derive(Debug, Clone)]
pub struct DetectorBundle {
    conflict_probe: ProbeWeights,
    selection_probe: Option<ProbeWeights>,
    layer: usize,
    kind: LayerKind,
    threshold: f64,
}

fn check_meta(
    probe: &ProbeWeights,
    what: &str,
    task: TaskKind,
    layer: usize,
    kind: LayerKind,
) -> Result<(), DetectorError> {
    let m = &probe.meta;
    if m.layer != layer || m.kind != kind {
        return Err(DetectorError::MetadataMismatch(format!(
            "{what} probe was trained for layer {} ({}), requested layer {layer} ({kind})",
            m.layer, m.kind
        )));
    }
    if m.task != task {
        return Err(DetectorError::MetadataMismatch(format!(
            "{what} probe was trained for task {}, expected {task}",
            m.task
        )));
    }
    Ok(())
}

impl DetectorBundle {
    pub fn new(
        conflict_probe: ProbeWeights,
        selection_probe: Option<ProbeWeights>,
        layer: usize,
        kind: LayerKind,
        threshold: f64,
    ) -> Result<Self, DetectorError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(DetectorError::InvalidThreshold(threshold));
        }
        check_meta(&conflict_probe, "conflict", TaskKind::ConflictDetection, layer, kind)?;
        if let Some(sel) = &selection_probe {
            check_meta(sel, "selection", TaskKind::SourceSelection, layer, kind)?;
            if sel.dim() != conflict_probe.dim() {
                return Err(DetectorError::MetadataMismatch(format!(
                    "hidden_dim differs: conflict probe {}, selection probe {}",
                    conflict_probe.dim(),
                    sel.dim()
                )));
            }
        }
        Ok(DetectorBundle {
            conflict_probe,
            selection_probe,
            layer,
            kind,
            threshold,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.conflict_probe.dim()
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Scores `x`. The source is only predicted for flagged conflicts, since
    /// the selection probe never saw non-conflict inputs.
    pub fn detect(&self, x: &[f64]) -> Result<Detection, DetectorError> {
        let p_conflict = self.conflict_probe.score(x)?;
        let conflict = p_conflict >= self.threshold;
        let source = match (&self.selection_probe, conflict) {
            (Some(sel), true) => Some(if sel.score(x)? >= 0.5 {
                Source::Contextual
            } else {
                Source::Parametric
            }),
            _ => None,
        };
        Ok(Detection {
            p_conflict,
            conflict,
            source,
        })
    }

    /// Reads back-to-back little-endian `f32` vectors of `hidden_dim`
    /// components and writes one JSON line per vector. Returns the number of
    /// vectors scored.
    pub fn detect_stream<R: Read, W: Write>(&self, input: R, mut output: W) -> Result<usize, DetectorError> {
        let mut reader = io::BufReader::new(input);
        let mut raw = vec![0u8; self.hidden_dim() * 4];
        let mut x = vec![0.0f64; self.hidden_dim()];
        let mut count = 0;
        loop {
            let mut got = 0;
            while got < raw.len() {
                let buf = reader.fill_buf()?;
                if buf.is_empty() {
                    break;
                }
                let take = buf.len().min(raw.len() - got);
                raw[got..got + take].copy_from_slice(&buf[..take]);
                reader.consume(take);
                got += take;
            }
            if got == 0 {
                break;
            }
            if got < raw.len() {
                return Err(DetectorError::PartialVector(got));
            }
            for (v, c) in x.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
            }
            let det = self.detect(&x)?;
            serde_json::to_writer(&mut output, &det).map_err(io::Error::from)?;
            output.write_all(b"\n")?;
            count += 1;
        }
        output.flush()?;
        Ok(count)
    }
}

/// Loads probe files and validates them against the requested operating point.
pub fn load_bundle(
    conflict_path: impl AsRef<Path>,
    selection_path: Option<&Path>,
    layer: usize,
    kind: LayerKind,
    threshold: f64,
) -> Result<DetectorBundle, DetectorError> {
    let load = |p: &Path| {
        ProbeWeights::load(p).map_err(|source| DetectorError::Load {
            path: p.display().to_string(),
            source,
        })
    };
    let conflict = load(conflict_path.as_ref())?;
    let selection = selection_path.map(load).transpose()?;
    DetectorBundle::new(conflict, selection, layer, kind, threshold)
}
