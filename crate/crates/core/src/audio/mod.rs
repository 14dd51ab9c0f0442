//! Waveform container, WAV I/O, rate conversion and the training-time
//! augmentation transforms.

mod augment;
mod resample;
mod stretch;
mod wav;

use ndarray::{Array2, Axis};
use thiserror::Error;

pub use augment::{augment, AugmentPolicy, Transform};
pub use resample::{resample, resample_ratio};
pub use stretch::{pitch_shift, time_stretch, STRETCH_FRAME, STRETCH_HOP};
pub use wav::{load_wav, read_wav, save_wav, write_wav};

pub const MIN_RATE: u32 = 8_000;
pub const MAX_RATE: u32 = 192_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding (format tag {format}, {bits} bits)")]
    UnsupportedEncoding { format: u16, bits: u16 },
    #[error("WAV data chunk is truncated")]
    TruncatedData,
    #[error("sample rate {0} Hz outside 8000..=192000")]
    InvalidRate(u32),
    #[error("audio contains non-finite samples")]
    NonFinite,
    #[error("audio must have at least one channel")]
    NoChannels,
    #[error("expected mono audio, got {0} channels")]
    NotMono(usize),
    #[error("pitch shift of {0} semitones outside [-12, 12]")]
    OutOfRangeShift(i32),
    #[error("stretch factor {0} outside [0.5, 2.0]")]
    OutOfRangeFactor(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sampled waveform, `[channels x frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Array2<f64>,
    sample_rate: u32,
}

pub(crate) fn check_rate(rate: u32) -> Result<(), AudioError> {
    if (MIN_RATE..=MAX_RATE).contains(&rate) {
        Ok(())
    } else {
        Err(AudioError::InvalidRate(rate))
    }
}

impl AudioBuffer {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        check_rate(sample_rate)?;
        if samples.nrows() == 0 {
            return Err(AudioError::NoChannels);
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite);
        }
        Ok(Self {
            samples: samples.as_standard_layout().into_owned(),
            sample_rate,
        })
    }

    pub fn from_mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        let n = samples.len();
        let arr = Array2::from_shape_vec((1, n), samples).expect("1 x n shape");
        Self::new(arr, sample_rate)
    }

    pub fn from_channels(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self, AudioError> {
        let frames = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != frames) {
            return Err(AudioError::MalformedHeader("ragged channels".into()));
        }
        let n_ch = channels.len();
        let flat: Vec<f64> = channels.into_iter().flatten().collect();
        let arr = Array2::from_shape_vec((n_ch, frames), flat).expect("checked shape");
        Self::new(arr, sample_rate)
    }

    pub fn silence(channels: usize, frames: usize, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(Array2::zeros((channels, frames)), sample_rate)
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn frames(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        self.samples
            .row(ch)
            .to_slice()
            .expect("buffers are kept in standard layout")
    }

    /// The single channel of a mono buffer.
    pub fn mono(&self) -> Result<&[f64], AudioError> {
        if self.channels() != 1 {
            return Err(AudioError::NotMono(self.channels()));
        }
        Ok(self.channel(0))
    }

    /// Frames `[start, end)`, clamped to the buffer.
    pub fn slice_frames(&self, start: usize, end: usize) -> AudioBuffer {
        let end = end.min(self.frames());
        let start = start.min(end);
        AudioBuffer {
            samples: self.samples.slice(ndarray::s![.., start..end]).to_owned(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, gain: f64) -> AudioBuffer {
        AudioBuffer {
            samples: &self.samples * gain,
            sample_rate: self.sample_rate,
        }
    }

    /// Applies `f` to every channel independently; all outputs must share a length.
    pub(crate) fn map_channels<F>(&self, rate: u32, mut f: F) -> Result<AudioBuffer, AudioError>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>, AudioError>,
    {
        let mut out = Vec::with_capacity(self.channels());
        for ch in 0..self.channels() {
            out.push(f(self.channel(ch))?);
        }
        AudioBuffer::from_channels(out, rate)
    }
}

/// Arithmetic mean over channels.
pub fn to_mono(buf: &AudioBuffer) -> AudioBuffer {
    if buf.channels() == 1 {
        return buf.clone();
    }
    let mean = buf
        .samples
        .mean_axis(Axis(0))
        .expect("at least one channel")
        .insert_axis(Axis(0));
    AudioBuffer {
        samples: mean,
        sample_rate: buf.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn to_mono_identity_on_mono() {
        let b = AudioBuffer::from_mono(vec![0.1, -0.2, 0.3], 16000).unwrap();
        assert_eq!(to_mono(&b), b);
    }

    #[test]
    fn to_mono_means_channels() {
        let b = AudioBuffer::from_channels(vec![vec![1.0, 0.5], vec![-1.0, 0.1]], 16000).unwrap();
        let m = to_mono(&b);
        assert_eq!(m.channels(), 1);
        assert_eq!(m.channel(0)[0], 0.0);
        assert!((m.channel(0)[1] - 0.3).abs() < 1e-15);
        assert_eq!(to_mono(&m), m);
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(
            AudioBuffer::from_mono(vec![0.0], 4000),
            Err(AudioError::InvalidRate(4000))
        ));
        assert!(matches!(
            AudioBuffer::from_mono(vec![f64::NAN], 16000),
            Err(AudioError::NonFinite)
        ));
        assert!(matches!(
            AudioBuffer::new(Array2::zeros((0, 4)), 16000),
            Err(AudioError::NoChannels)
        ));
    }
}
