//! Manifests, splits, the training loop, metrics and synthetic data.

mod manifest;
mod metrics;
mod pipeline;
mod synth;
mod trainer;

pub use manifest::{read_manifest, split_dataset, write_manifest, Entry, Manifest, Split};
pub use metrics::{confusion, metrics, roc_auc, Counts, EvalReport, METRIC_HEADER};
pub use pipeline::{
    analyze_tracks, build_stage1_set, build_stage2_set, evaluate_tracks, featurize_tracks, load_tracks, run_two_stage,
    sequence_from_features, Track, TrackFeatures,
    TrackOutcome, TwoStageConfig, TwoStageResult,
};
pub use synth::{render_track, synth_dataset, synth_plans, SynthSpec, TrackPlan};
pub use trainer::{
    evaluate, train, AudioSet, Dataset, EarlyStopping, EpochRecord, FeatureSet, History, LossKind, TrainConfig, TrainOutcome,
    MIN_IMPROVEMENT, TRAIN_PRESETS,
};

use thiserror::Error;

use crate::{AudioError, BeatError, DetectError, NnError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("need at least {need} entries, got {got}")]
    TooFewEntries { need: usize, got: usize },
    #[error("empty split: {0}")]
    EmptySplit(String),
    #[error("loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("AUC needs both classes")]
    OneClassOnly,
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Beat(#[from] BeatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for TrainError {
    fn from(e: csv::Error) -> Self {
        TrainError::BadManifest(e.to_string())
    }
}
