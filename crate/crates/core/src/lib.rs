//! Two-stage detection of AI-generated music.
//!
//! Stage 1 classifies short audio segments with attention models over pluggable
//! feature extractors ([`detect::AudioCat`], [`detect::FxSegment`]). Stage 2 cuts a
//! full track into 4-bar units on a quantized downbeat grid ([`beats`]), embeds
//! every unit with a trained stage-1 model, and classifies the whole sequence
//! with the dual-pathway [`detect::SegmentTransformer`] (content embeddings plus
//! their self-similarity matrix).
//!
//! ```text
//! wav -> mono/16 kHz -> onset envelope -> tempo -> beats -> downbeats -> grid
//!     -> 4-bar segments -> extractor -> stage-1 pooled vectors -> pad/crop 48
//!     -> content encoder  \
//!     -> SSM rows encoder  > concat -> head -> P(ai)
//! ```
//!
//! All model math runs on the small reverse-mode engine in [`nn`], in 64-bit floats.

pub mod audio;
pub mod beats;
pub mod detect;
pub mod dsp;
pub mod nn;
pub mod train;

mod rng;

pub use audio::{AudioBuffer, AudioError};
pub use beats::{BeatError, BeatGrid, SegmentSet};
pub use detect::{DetectError, DetectorOutput, EmbeddingSequence, Ssm};
pub use dsp::DspError;
pub use nn::{NnError, Tensor};
pub use train::{EvalReport, TrainError};

/// Sample rate every built-in analysis path runs at.
pub const ANALYSIS_RATE: u32 = 16_000;
