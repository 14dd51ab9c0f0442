//! Stage-1 segment detectors, the stage-2 track detector, feature extractors
//! and self-similarity.

mod audiocat;
mod embfile;
mod extract;
mod fxseg;
mod model;
mod segtr;
mod sequence;

pub use audiocat::{AudioCat, AudioCatConfig};
pub use embfile::{read_embeddings, save_embeddings, load_embeddings, write_embeddings, EMB_MAGIC, EMB_VERSION};
pub use extract::{
    conform, extractor_preset, mean_vector, EmbeddingDir, FeatureExtractor, FeatureKind, Features, LogMelProjector, StubExtractor,
    VectorEmbedder, WindowedEmbedder, EXTRACTOR_PRESETS,
};
pub use fxseg::{FxSegConfig, FxSegment};
pub use model::{load_detector, predict, AnyDetector, Arch, Detector, DetectorOutput, ForwardVars};
pub use segtr::{SegTrConfig, SegmentTransformer};
pub use sequence::{pad_or_crop, self_similarity, track_to_sequence, EmbeddingSequence, Ssm, MAX_SEGMENTS};

use thiserror::Error;

use crate::{AudioError, BeatError, DspError, NnError};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("empty input sequence")]
    EmptySequence,
    #[error("every position is masked")]
    AllMasked,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("extractor expects {expected} Hz, segment is {got} Hz")]
    RateMismatch { expected: u32, got: u32 },
    #[error("segment too short: {0}")]
    TooShort(String),
    #[error("bad embedding file magic")]
    BadMagic,
    #[error("embedding file truncated: {0}")]
    Truncated(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("no precomputed embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Beat(#[from] BeatError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
