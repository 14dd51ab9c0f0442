//! Browser bindings: decode or synthesize a track, then show its beat grid,
//! the self-similarity of its 4-bar segments and its log-mel spectrogram.

use aigm_core::audio::{read_wav, resample, to_mono, AudioBuffer};
use aigm_core::beats::{analyze_track, segment_bars, BARS_PER_SEGMENT};
use aigm_core::detect::{self_similarity, EmbeddingSequence};
use aigm_core::dsp::{dsp_embed, log_mel, mel_filterbank, stft, TOP_DB};
use aigm_core::train::{render_track, SynthSpec, TrackPlan};
use aigm_core::ANALYSIS_RATE;
use ndarray::Array2;
use wasm_bindgen::prelude::*;

const EMBED_DIM: usize = 2048;
const MEL_FRAME: usize = 1024;
const MEL_HOP: usize = 256;

#[wasm_bindgen]
pub struct Track {
    audio: AudioBuffer,
}

/// Beat tracker output, in seconds.
#[wasm_bindgen]
pub struct Beats {
    bpm: f64,
    beats: Vec<f64>,
    downbeats: Vec<f64>,
    /// `[start0, end0, start1, end1, ...]`
    bars: Vec<f64>,
    segments: usize,
}

/// Row-major 8-bit grayscale image.
#[wasm_bindgen]
pub struct Heatmap {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

#[wasm_bindgen]
impl Beats {
    #[wasm_bindgen(getter)]
    pub fn bpm(&self) -> f64 {
        self.bpm
    }

    pub fn beats(&self) -> Vec<f64> {
        self.beats.clone()
    }

    pub fn downbeats(&self) -> Vec<f64> {
        self.downbeats.clone()
    }

    pub fn bars(&self) -> Vec<f64> {
        self.bars.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn segments(&self) -> usize {
        self.segments
    }
}

#[wasm_bindgen]
impl Heatmap {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> Vec<u8> {
        self.pixels.clone()
    }
}

#[wasm_bindgen]
impl Track {
    /// Decodes a PCM or float WAV file and converts it to 16 kHz mono.
    #[wasm_bindgen(js_name = fromWav)]
    pub fn from_wav(bytes: &[u8]) -> Result<Track, JsError> {
        Track::decode(bytes).map_err(|e| JsError::new(&e))
    }

    /// A synthetic track: `structured` repeats 4-bar sections (AABA) with
    /// accented downbeats, otherwise bars are shuffled with random accents.
    pub fn synth(structured: bool, bpm: f64, seconds: f64, seed: u32) -> Track {
        let plan = TrackPlan {
            label: u8::from(!structured),
            bpm: bpm.clamp(40.0, 240.0),
            lead_in_s: 0.1,
            seed: seed as u64,
        };
        let spec = SynthSpec {
            duration_s: seconds.clamp(4.0, 300.0),
            ..SynthSpec::default()
        };
        Track {
            audio: render_track(&plan, &spec),
        }
    }

    #[wasm_bindgen(getter)]
    pub fn duration(&self) -> f64 {
        self.audio.duration_s()
    }

    #[wasm_bindgen(getter, js_name = sampleRate)]
    pub fn sample_rate(&self) -> u32 {
        self.audio.sample_rate()
    }

    /// Mono samples for playback.
    pub fn samples(&self) -> Vec<f32> {
        self.audio.channel(0).iter().map(|&v| v as f32).collect()
    }

    pub fn analyze(&self) -> Result<Beats, JsError> {
        self.beat_grid().map_err(|e| JsError::new(&e))
    }

    /// Cosine self-similarity of the track's 4-bar segments, black at -1 and
    /// white at 1.
    pub fn ssm(&self) -> Result<Heatmap, JsError> {
        self.segment_ssm().map_err(|e| JsError::new(&e))
    }

    /// Log-mel spectrogram over the top 80 dB, low bands at the bottom.
    #[wasm_bindgen(js_name = logMel)]
    pub fn log_mel(&self, bands: usize) -> Result<Heatmap, JsError> {
        self.mel_image(bands).map_err(|e| JsError::new(&e))
    }
}

impl Track {
    pub fn decode(bytes: &[u8]) -> Result<Track, String> {
        let buf = read_wav(bytes).map_err(|e| e.to_string())?;
        let audio = resample(&to_mono(&buf), ANALYSIS_RATE).map_err(|e| e.to_string())?;
        Ok(Track { audio })
    }

    pub fn beat_grid(&self) -> Result<Beats, String> {
        let a = analyze_track(&self.audio).map_err(|e| e.to_string())?;
        let segments = segment_bars(&self.audio, &a.grid, BARS_PER_SEGMENT).map_or(0, |s| s.len());
        Ok(Beats {
            bpm: a.bpm,
            beats: a.beats,
            downbeats: a.downbeats,
            bars: a.grid.bars().into_iter().flat_map(|(s, e)| [s, e]).collect(),
            segments,
        })
    }

    pub fn segment_ssm(&self) -> Result<Heatmap, String> {
        let a = analyze_track(&self.audio).map_err(|e| e.to_string())?;
        let segs = segment_bars(&self.audio, &a.grid, BARS_PER_SEGMENT).map_err(|e| e.to_string())?;
        let n = segs.len();
        let mut rows = Vec::with_capacity(n * EMBED_DIM);
        for s in &segs.segments {
            rows.extend(dsp_embed(s, EMBED_DIM).map_err(|e| e.to_string())?);
        }
        let vectors = Array2::from_shape_vec((n, EMBED_DIM), rows).map_err(|e| e.to_string())?;
        let ssm = self_similarity(&EmbeddingSequence::new(vectors, (0..n).map(|i| format!("#{i}")).collect()));
        Ok(Heatmap {
            width: n,
            height: n,
            pixels: ssm.matrix.iter().map(|v| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8).collect(),
        })
    }

    pub fn mel_image(&self, bands: usize) -> Result<Heatmap, String> {
        let rate = self.audio.sample_rate();
        let spec = stft(&self.audio, MEL_FRAME, MEL_HOP).map_err(|e| e.to_string())?;
        let fb = mel_filterbank(bands, MEL_FRAME, rate, 0.0, rate as f64 / 2.0).map_err(|e| e.to_string())?;
        let mel = log_mel(&spec, &fb).map_err(|e| e.to_string())?;
        let (frames, bands) = mel.values.dim();
        let peak = mel.values.iter().cloned().fold(f64::MIN, f64::max);
        let range = TOP_DB * std::f64::consts::LN_10 / 10.0;
        let mut pixels = vec![0u8; frames * bands];
        for ((t, b), &v) in mel.values.indexed_iter() {
            let level = ((v - peak + range) / range).clamp(0.0, 1.0);
            pixels[(bands - 1 - b) * frames + t] = (level * 255.0).round() as u8;
        }
        Ok(Heatmap {
            width: frames,
            height: bands,
            pixels,
        })
    }
}
