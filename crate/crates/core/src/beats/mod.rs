//! Tempo, beats, downbeats, grid quantization and 4-bar segmentation.
//!
//! The tracker is the classical autocorrelation tempo estimate followed by a
//! dynamic-programming beat placement over the spectral-flux envelope. Meter
//! is fixed at 4/4.

mod grid;
mod segment;
mod tempo;
mod tracker;

use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub use grid::{quantize_grid, BeatGrid, METER};
pub use segment::{segment_bars, segment_count, SegmentSet, BARS_PER_SEGMENT, TAIL_TOLERANCE_S};
pub use tempo::{estimate_tempo, MAX_BPM, MIN_BPM, PERIODICITY_THRESHOLD};
pub use tracker::{pick_downbeats, track_beats, TIGHTNESS};

use crate::audio::AudioBuffer;
use crate::dsp::{DspError, OnsetEnvelope};

#[derive(Debug, Error)]
pub enum BeatError {
    #[error("input too short: {0}")]
    TooShort(String),
    #[error("onset envelope shows no periodicity")]
    NoPeriodicity,
    #[error("{0} beats found, need at least 8 to pick a downbeat phase")]
    TooFewBeats(usize),
    #[error("degenerate grid fit (period {0})")]
    DegenerateFit(f64),
    #[error("grid too sparse: {0}")]
    GridTooSparse(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Everything the full-track front-end recovers from one waveform.
#[derive(Debug, Clone)]
pub struct BeatAnalysis {
    pub bpm: f64,
    pub beats: Vec<f64>,
    pub downbeats: Vec<f64>,
    pub grid: BeatGrid,
    pub envelope: OnsetEnvelope,
}

/// onset envelope -> tempo -> beats -> downbeats -> arithmetic grid.
pub fn analyze_track(track: &AudioBuffer) -> Result<BeatAnalysis, BeatError> {
    let envelope = OnsetEnvelope::from_audio(track)?;
    let bpm = estimate_tempo(&envelope)?;
    let beats = track_beats(&envelope, bpm)?;
    let downbeats = pick_downbeats(&beats, &envelope)?;
    let grid = quantize_grid(&downbeats)?;
    Ok(BeatAnalysis {
        bpm,
        beats,
        downbeats,
        grid,
        envelope,
    })
}

/// Writes `index,start_s,end_s` rows.
pub fn write_boundaries_csv(path: impl AsRef<Path>, spans: &[(f64, f64)]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "index,start_s,end_s")?;
    for (i, (s, e)) in spans.iter().enumerate() {
        writeln!(w, "{i},{s:.6},{e:.6}")?;
    }
    w.flush()
}
