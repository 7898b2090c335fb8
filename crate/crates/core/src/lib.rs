//! Linear probes and shape metrics over transformer residual-stream
//! activations, for detecting context–memory knowledge conflicts and
//! predicting which knowledge source a model will use.
//!
//! The pipeline:
//!
//! 1. [`store`] reads and writes activation dumps and slices them into
//!    labeled [`ProbeDataset`]s, split by question.
//! 2. [`probe`] trains bias-free L1-regularized logistic probes.
//! 3. [`experiment`] sweeps layers, kinds and seeds and aggregates curves;
//!    it also runs the per-group shape analyses from [`metrics`].
//! 4. [`detector`] applies a trained probe pair to one activation at
//!    inference time.

pub mod detector;
pub mod experiment;
pub mod metrics;
pub mod probe;
pub mod report;
pub mod store;
pub mod synthetic;

pub use detector::{load_bundle, Detection, DetectorBundle, Source};
pub use experiment::{
    best_layer, emit_curves, run_probe_sweep, run_selection_sweep, run_shape_analysis, BehaviourGroup, Grouping,
    LayerSelection, MetricCurve, ShapeConfig, SweepConfig, SweepOutput,
};
pub use metrics::MetricKind;
pub use probe::{evaluate, train, ProbeWeights, StepSize, TrainConfig, TrainResult};
pub use store::{
    build_probe_dataset, read_dump, split_by_question, write_dump, AnswerGroup, Dump, DumpHeader, EvidenceGroup,
    InstanceRecord, LayerKind, ProbeDataset, TaskKind,
};
