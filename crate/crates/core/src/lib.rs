//! Sound event detection toolkit built around onset/offset-weighted binary
//! cross-entropy.
//!
//! The crate covers the whole desk-scale pipeline: label rasterization,
//! boundary weight masks and class weights, the training losses, frame
//! post-processing, event-based F-score and PSDS, a synthetic corpus
//! generator and a linear toy model used to compare losses end to end.

pub mod config;
pub mod convert;
pub mod error;
pub mod experiment;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod postprocess;
pub mod synth;
pub mod trainer;
pub mod types;
pub mod weighting;

pub use config::PipelineConfig;
pub use convert::{events_to_labels, labels_to_events};
pub use error::{Error, ErrorCategory, Result};
pub use loss::{CombinerWeights, LossBreakdown};
pub use metrics::{ClipScores, EvaluationConfig, F1Config, MetricReport, PsdsConfig};
pub use postprocess::PostprocessConfig;
pub use synth::{Corpus, SynthConfig};
pub use trainer::{LinearFrameModel, TrainConfig};
pub use types::{
    BoundaryImpulse, ClassVocabulary, Event, EventList, Features, FrameGrid, FrameMatrix,
    LabelTensor, ScoreTensor, WeightMask,
};
pub use weighting::{ClassStats, WindowParams};
