use super::stft::stft_samples;
use super::{log_mel, mel_filterbank, DspError, MelSpectrogram, FRAME_LEN, HOP, N_MELS};
use crate::audio::{resample, to_mono, AudioBuffer};
use crate::ANALYSIS_RATE;

/// Dynamic range kept by `OnsetEnvelope::from_audio`, in dB.
pub const TOP_DB: f64 = 80.0;

/// Spectral flux: `o[t] = sum_m max(0, mel[t] - mel[t-1])`, `o[0] = 0`, then
/// mean-subtracted and half-wave rectified.
pub fn onset_envelope(mel: &MelSpectrogram) -> Result<Vec<f64>, DspError> {
    let frames = mel.frames();
    if frames < 2 {
        return Err(DspError::TooShort(format!("{frames} mel frames, need 2")));
    }
    let v = &mel.values;
    let mut o = vec![0.0; frames];
    for t in 1..frames {
        o[t] = v
            .row(t)
            .iter()
            .zip(v.row(t - 1).iter())
            .map(|(a, b)| (a - b).max(0.0))
            .sum();
    }
    let mean = o.iter().sum::<f64>() / frames as f64;
    Ok(o.into_iter().map(|x| (x - mean).max(0.0)).collect())
}

/// Onset envelope together with its frame clock.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetEnvelope {
    pub values: Vec<f64>,
    /// Seconds between frames.
    pub hop_s: f64,
    /// Time of frame 0. Flux at frame `t` reacts to the newest hop of samples,
    /// so a frame is stamped at the middle of that hop.
    pub offset_s: f64,
}

impl OnsetEnvelope {
    pub fn new(values: Vec<f64>, hop_s: f64) -> Self {
        Self {
            values,
            hop_s,
            offset_s: 0.0,
        }
    }

    /// Mono-mixes and resamples to 16 kHz, then runs the standard front-end
    /// (1024/256 Hann STFT, 40-band log-mel over the full band). The signal is
    /// preceded by one frame of silence so the first onset is not lost, and
    /// the log-mel is clipped `TOP_DB` below its peak so that onsets out of
    /// digital silence keep their relative loudness.
    pub fn from_audio(buf: &AudioBuffer) -> Result<Self, DspError> {
        let mono = resample(&to_mono(buf), ANALYSIS_RATE)?;
        // a frame of leading silence makes onsets at t = 0 visible
        let mut padded = vec![0.0; FRAME_LEN];
        padded.extend_from_slice(mono.mono()?);
        let spec = stft_samples(&padded, FRAME_LEN, HOP, ANALYSIS_RATE)?;
        let fb = mel_filterbank(N_MELS, FRAME_LEN, ANALYSIS_RATE, 0.0, ANALYSIS_RATE as f64 / 2.0)?;
        let mut mel = log_mel(&spec, &fb)?;
        let peak = mel.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let floor = peak - TOP_DB * std::f64::consts::LN_10 / 10.0;
        mel.values.mapv_inplace(|v| v.max(floor));
        let values = onset_envelope(&mel)?;
        let rate = ANALYSIS_RATE as f64;
        Ok(Self {
            values,
            hop_s: HOP as f64 / rate,
            offset_s: -(HOP as f64 / 2.0) / rate,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 * self.hop_s
    }

    pub fn frame_time(&self, frame: f64) -> f64 {
        self.offset_s + frame * self.hop_s
    }

    /// Nearest frame index for a time, clamped to the envelope.
    pub fn frame_at(&self, t: f64) -> usize {
        let f = ((t - self.offset_s) / self.hop_s).round();
        (f.max(0.0) as usize).min(self.values.len().saturating_sub(1))
    }
}
