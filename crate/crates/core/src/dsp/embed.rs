use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array1, Array2};

use super::{log_mel, mel_filterbank, stft, DspError, FRAME_LEN, HOP};
use crate::audio::AudioBuffer;
use crate::rng::{gaussian, seeded};

pub const EMBED_BANDS: usize = 40;
pub const EMBED_SEED: u64 = 42;
pub const MIN_EMBED_SECONDS: f64 = 0.2;
const STATS: usize = 4;

/// Fixed Gaussian projection `[n_in x dim]`, shared per (seed, n_in, dim).
pub(crate) fn projection(seed: u64, n_in: usize, dim: usize) -> Arc<Array2<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize, usize), Arc<Array2<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().expect("projection cache poisoned");
    map.entry((seed, n_in, dim))
        .or_insert_with(|| {
            let mut rng = seeded(seed ^ ((n_in as u64) << 32) ^ dim as u64);
            let scale = 1.0 / (n_in as f64).sqrt();
            Arc::new(Array2::from_shape_simple_fn((n_in, dim), || gaussian(&mut rng) * scale))
        })
        .clone()
}

fn unit(mut v: Array1<f64>) -> Vec<f64> {
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        v /= norm;
    }
    v.to_vec()
}

/// Per-band log-mel statistics, projected to `dim` and L2-normalized.
///
/// Features per band: mean and max (both relative to the segment's overall
/// log-mel mean, which makes them gain invariant), standard deviation, and
/// mean positive flux. Silent input maps to the zero vector.
pub fn dsp_embed(segment: &AudioBuffer, dim: usize) -> Result<Vec<f64>, DspError> {
    let x = segment.mono()?;
    let rate = segment.sample_rate();
    let secs = segment.duration_s();
    if secs < MIN_EMBED_SECONDS || x.len() < FRAME_LEN + HOP {
        return Err(DspError::TooShort(format!("{secs:.3} s segment")));
    }
    let spec = stft(segment, FRAME_LEN, HOP)?;
    let fb = mel_filterbank(EMBED_BANDS, FRAME_LEN, rate, 0.0, rate as f64 / 2.0)?;
    let mel = log_mel(&spec, &fb)?.values;
    let frames = mel.nrows() as f64;
    let global = mel.mean().unwrap_or(0.0);
    if mel.iter().all(|&v| (v - global).abs() < 1e-9) {
        return Ok(vec![0.0; dim]);
    }

    let mut feats = Array1::zeros(EMBED_BANDS * STATS);
    for b in 0..EMBED_BANDS {
        let col = mel.column(b);
        let mean = col.sum() / frames;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / frames;
        let max = col.iter().cloned().fold(f64::MIN, f64::max);
        let flux = col
            .iter()
            .zip(col.iter().skip(1))
            .map(|(a, b)| (b - a).max(0.0))
            .sum::<f64>()
            / (frames - 1.0);
        feats[b * STATS] = mean - global;
        feats[b * STATS + 1] = var.sqrt();
        feats[b * STATS + 2] = max - global;
        feats[b * STATS + 3] = flux;
    }
    let proj = projection(EMBED_SEED, EMBED_BANDS * STATS, dim);
    Ok(unit(feats.dot(proj.as_ref())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::test_util::sine;
    use rand::Rng;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn noise(n: usize, amp: f64, seed: u64) -> Vec<f64> {
        let mut r = seeded(seed);
        (0..n).map(|_| amp * r.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn unit_norm_and_deterministic() {
        for dim in [64, 512, 768, 2048] {
            let b = AudioBuffer::from_mono(noise(16000, 0.3, 1), 16000).unwrap();
            let e = dsp_embed(&b, dim).unwrap();
            assert_eq!(e.len(), dim);
            assert!((cosine(&e, &e) - 1.0).abs() < 1e-9);
            assert_eq!(e, dsp_embed(&b, dim).unwrap());
        }
    }

    #[test]
    fn tone_and_noise_are_separable() {
        let tone = sine(440.0, 16000, 16000, 0.5);
        let r = rms(&tone);
        let n = noise(16000, 1.0, 4);
        let scale = r / rms(&n);
        let n: Vec<f64> = n.into_iter().map(|v| v * scale).collect();
        let a = dsp_embed(&AudioBuffer::from_mono(tone, 16000).unwrap(), 512).unwrap();
        let b = dsp_embed(&AudioBuffer::from_mono(n, 16000).unwrap(), 512).unwrap();
        assert!(cosine(&a, &b) < 0.9, "{}", cosine(&a, &b));
    }

    #[test]
    fn gain_invariance() {
        let mut x = sine(330.0, 16000, 24000, 0.3);
        for (v, n) in x.iter_mut().zip(noise(24000, 0.05, 8)) {
            *v += n;
        }
        let b = AudioBuffer::from_mono(x, 16000).unwrap();
        let e = dsp_embed(&b, 256).unwrap();
        for g in [0.5, 2.0] {
            let eg = dsp_embed(&b.scaled(g), 256).unwrap();
            assert!(cosine(&e, &eg) >= 0.99);
        }
    }

    #[test]
    fn too_short_and_silence() {
        let b = AudioBuffer::silence(1, 3000, 16000).unwrap();
        assert!(matches!(dsp_embed(&b, 64), Err(DspError::TooShort(_))));
        let s = AudioBuffer::silence(1, 8000, 16000).unwrap();
        assert!(dsp_embed(&s, 64).unwrap().iter().all(|&v| v == 0.0));
    }
}
