use std::path::PathBuf;

use ndarray::Array2;

use super::{load_embeddings, DetectError, EmbeddingSequence};
use crate::audio::{resample, to_mono, AudioBuffer};
use crate::dsp::{dsp_embed, log_mel, mel_filterbank, stft, MIN_EMBED_SECONDS, N_MELS};
use crate::dsp::embed::projection;
use crate::ANALYSIS_RATE;

/// Built-in extractor names accepted by [`extractor_preset`].
pub const EXTRACTOR_PRESETS: [&str; 5] = ["seq-512", "seq-768", "vec-2048", "win-128", "stub-512"];

/// Frame grid shared by the sequence extractors: 512 samples, hop 256 at 16 kHz.
const SEQ_FRAME: usize = 512;
const SEQ_HOP: usize = 256;
const SEQ_SEED: u64 = 0x5e9;
const STUB_SEED: u64 = 0x57b;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Sequence,
    Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Sequence(EmbeddingSequence),
    Vector(Vec<f64>),
}

impl Features {
    pub fn dim(&self) -> usize {
        match self {
            Features::Sequence(s) => s.dim(),
            Features::Vector(v) => v.len(),
        }
    }

    /// A vector becomes a one-row sequence.
    pub fn into_sequence(self) -> EmbeddingSequence {
        match self {
            Features::Sequence(s) => s,
            Features::Vector(v) => {
                let n = v.len();
                EmbeddingSequence::new(Array2::from_shape_vec((1, n), v).expect("row"), vec![])
            }
        }
    }
}

/// Turns a mono 16 kHz audio segment into model input.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> FeatureKind;
    fn dim(&self) -> usize;
    /// Whether the extractor counts as fine-tuned with the detector. None of
    /// the built-in extractors have parameters; the flag only gates augmentation.
    fn trainable(&self) -> bool {
        false
    }
    fn sample_rate(&self) -> u32 {
        ANALYSIS_RATE
    }
    /// `key` identifies the segment (used by precomputed lookups).
    fn extract(&self, segment: &AudioBuffer, key: &str) -> Result<Features, DetectError>;
}

/// Mono-mixes and resamples `buf` to what `ex` expects.
pub fn conform(buf: &AudioBuffer, ex: &dyn FeatureExtractor) -> Result<AudioBuffer, DetectError> {
    Ok(resample(&to_mono(buf), ex.sample_rate())?)
}

fn check_input(seg: &AudioBuffer, rate: u32) -> Result<&[f64], DetectError> {
    if seg.sample_rate() != rate {
        return Err(DetectError::RateMismatch {
            expected: rate,
            got: seg.sample_rate(),
        });
    }
    let x = seg.mono()?;
    if x.len() < SEQ_FRAME {
        return Err(DetectError::TooShort(format!("{} samples", x.len())));
    }
    Ok(x)
}

fn sequence(vectors: Array2<f64>, key: &str) -> Features {
    let n = vectors.nrows();
    Features::Sequence(EmbeddingSequence::new(vectors, vec![key.to_string(); n]))
}

/// Per-frame 40-band log-mel, standardized over the segment and randomly
/// projected to `dim`.
#[derive(Debug, Clone)]
pub struct LogMelProjector {
    name: String,
    dim: usize,
}

impl LogMelProjector {
    pub fn new(dim: usize) -> Self {
        Self {
            name: format!("seq-{dim}"),
            dim,
        }
    }

    pub fn frames_for(samples: usize) -> usize {
        if samples < SEQ_FRAME {
            0
        } else {
            1 + (samples - SEQ_FRAME) / SEQ_HOP
        }
    }
}

impl FeatureExtractor for LogMelProjector {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Sequence
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn trainable(&self) -> bool {
        true
    }

    fn extract(&self, seg: &AudioBuffer, key: &str) -> Result<Features, DetectError> {
        check_input(seg, ANALYSIS_RATE)?;
        let spec = stft(seg, SEQ_FRAME, SEQ_HOP)?;
        let fb = mel_filterbank(N_MELS, SEQ_FRAME, ANALYSIS_RATE, 0.0, ANALYSIS_RATE as f64 / 2.0)?;
        let mut mel = log_mel(&spec, &fb)?.values;
        let mean = mel.mean().unwrap_or(0.0);
        let sd = mel.std(0.0);
        if sd > 1e-9 {
            mel.mapv_inplace(|v| (v - mean) / sd);
        } else {
            mel.fill(0.0);
        }
        let proj = projection(SEQ_SEED, N_MELS, self.dim);
        Ok(sequence(mel.dot(proj.as_ref()), key))
    }
}

/// One global [`dsp_embed`] vector per segment.
#[derive(Debug, Clone)]
pub struct VectorEmbedder {
    name: String,
    dim: usize,
}

impl VectorEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            name: format!("vec-{dim}"),
            dim,
        }
    }
}

impl FeatureExtractor for VectorEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Vector
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, seg: &AudioBuffer, _key: &str) -> Result<Features, DetectError> {
        check_input(seg, ANALYSIS_RATE)?;
        Ok(Features::Vector(dsp_embed(seg, self.dim)?))
    }
}

/// [`dsp_embed`] over sliding windows, scaled to unit RMS per entry.
#[derive(Debug, Clone)]
pub struct WindowedEmbedder {
    name: String,
    dim: usize,
    pub window_s: f64,
    pub hop_s: f64,
}

impl WindowedEmbedder {
    pub fn new(dim: usize, window_s: f64, hop_s: f64) -> Self {
        Self {
            name: format!("win-{dim}"),
            dim,
            window_s,
            hop_s,
        }
    }
}

impl FeatureExtractor for WindowedEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Sequence
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, seg: &AudioBuffer, key: &str) -> Result<Features, DetectError> {
        let x = check_input(seg, ANALYSIS_RATE)?;
        let rate = ANALYSIS_RATE as f64;
        let win = (self.window_s * rate).round() as usize;
        let hop = ((self.hop_s * rate).round() as usize).max(1);
        if (x.len() as f64) < MIN_EMBED_SECONDS * rate {
            return Err(DetectError::TooShort(format!("{:.3} s", seg.duration_s())));
        }
        let starts: Vec<usize> = if x.len() <= win {
            vec![0]
        } else {
            (0..=(x.len() - win) / hop).map(|i| i * hop).collect()
        };
        let gain = (self.dim as f64).sqrt();
        let mut out = Array2::zeros((starts.len(), self.dim));
        for (row, &s0) in starts.iter().enumerate() {
            let w = seg.slice_frames(s0, (s0 + win).min(x.len()));
            let e = dsp_embed(&w, self.dim)?;
            for (o, v) in out.row_mut(row).iter_mut().zip(e) {
                *o = v * gain;
            }
        }
        Ok(sequence(out, key))
    }
}

/// Fixed random projection of raw sample frames; a placeholder encoder.
#[derive(Debug, Clone)]
pub struct StubExtractor {
    name: String,
    dim: usize,
    seed: u64,
}

impl StubExtractor {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            name: format!("stub-{dim}"),
            dim,
            seed,
        }
    }
}

impl FeatureExtractor for StubExtractor {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Sequence
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, seg: &AudioBuffer, key: &str) -> Result<Features, DetectError> {
        let x = check_input(seg, ANALYSIS_RATE)?;
        let n = LogMelProjector::frames_for(x.len());
        let frames = Array2::from_shape_fn((n, SEQ_FRAME), |(f, i)| x[f * SEQ_HOP + i]);
        let proj = projection(self.seed, SEQ_FRAME, self.dim);
        Ok(sequence(frames.dot(proj.as_ref()), key))
    }
}

/// Precomputed `EMB1` files, one per segment key: `<dir>/<key>.emb`.
#[derive(Debug, Clone)]
pub struct EmbeddingDir {
    pub dir: PathBuf,
    dim: usize,
}

impl EmbeddingDir {
    pub fn new(dir: impl Into<PathBuf>, dim: usize) -> Self {
        Self { dir: dir.into(), dim }
    }
}

impl FeatureExtractor for EmbeddingDir {
    fn name(&self) -> &str {
        "precomputed"
    }

    fn kind(&self) -> FeatureKind {
        FeatureKind::Sequence
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, _seg: &AudioBuffer, key: &str) -> Result<Features, DetectError> {
        let path = self.dir.join(format!("{key}.emb"));
        if !path.exists() {
            return Err(DetectError::MissingEmbedding(key.to_string()));
        }
        let seq = load_embeddings(&path)?;
        if seq.dim() != self.dim {
            return Err(DetectError::DimMismatch {
                expected: self.dim,
                got: seq.dim(),
            });
        }
        Ok(Features::Sequence(seq))
    }
}

pub fn extractor_preset(name: &str) -> Result<Box<dyn FeatureExtractor>, DetectError> {
    Ok(match name {
        "seq-512" => Box::new(LogMelProjector::new(512)),
        "seq-768" => Box::new(LogMelProjector::new(768)),
        "vec-2048" => Box::new(VectorEmbedder::new(2048)),
        "win-128" => Box::new(WindowedEmbedder::new(128, 1.0, 0.5)),
        "stub-512" => Box::new(StubExtractor::new(512, STUB_SEED)),
        _ => return Err(DetectError::UnknownPreset(name.to_string())),
    })
}

/// Mean over valid rows; how a sequence extractor feeds a vector model.
pub fn mean_vector(seq: &EmbeddingSequence) -> Vec<f64> {
    let n = seq.valid_count().max(1) as f64;
    let mut out = vec![0.0; seq.dim()];
    for (row, _) in seq.vectors.rows().into_iter().zip(&seq.mask).filter(|(_, &m)| m) {
        for (o, v) in out.iter_mut().zip(row.iter()) {
            *o += v / n;
        }
    }
    out
}
