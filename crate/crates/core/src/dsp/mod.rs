//! Spectral front-end: STFT, HTK mel filterbank, log-mel, spectral-flux onset
//! envelope and the fixed DSP segment embedder.

pub(crate) mod embed;
mod mel;
mod onset;
mod stft;

#[cfg(test)]
pub(crate) mod test_util;

use thiserror::Error;

pub use embed::{dsp_embed, EMBED_BANDS, EMBED_SEED, MIN_EMBED_SECONDS};
pub use mel::{hz_to_mel, log_mel, mel_filterbank, mel_to_hz, MelFilterbank, MelSpectrogram, LOG_FLOOR};
pub use onset::{onset_envelope, OnsetEnvelope, TOP_DB};
pub use stft::{hann_window, stft, Spectrogram};

/// Analysis frame used by the onset and embedding front-ends.
pub const FRAME_LEN: usize = 1024;
pub const HOP: usize = 256;
pub const N_MELS: usize = 40;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("bad frame parameters: frame {frame_len}, hop {hop}")]
    BadFrameParams { frame_len: usize, hop: usize },
    #[error("bad mel band: {0}")]
    BadBand(String),
    #[error("filterbank has {fb} bins, spectrogram has {spec}")]
    DimMismatch { fb: usize, spec: usize },
    #[error("input too short: {0}")]
    TooShort(String),
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
}
