use ndarray::Array2;

use super::{DspError, Spectrogram};

/// Floor added before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Log-compressed mel energies, `[frames x n_mels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f64>,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }
}

/// Triangular HTK filters; `weights` is `[n_mels x (frame_len/2 + 1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub weights: Array2<f64>,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn bins(&self) -> usize {
        self.weights.ncols()
    }
}

/// Builds the HTK filterbank.
///
/// A filter too narrow to straddle any FFT bin gets unit weight on the bin
/// nearest its center, so every row has support.
pub fn mel_filterbank(
    n_mels: usize,
    frame_len: usize,
    rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<MelFilterbank, DspError> {
    let nyquist = rate as f64 / 2.0;
    if n_mels < 8 {
        return Err(DspError::BadBand(format!("n_mels {n_mels} < 8")));
    }
    if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
        return Err(DspError::BadBand(format!(
            "need 0 <= fmin < fmax <= {nyquist}, got {fmin}..{fmax}"
        )));
    }
    if frame_len < 2 {
        return Err(DspError::BadFrameParams { frame_len, hop: 0 });
    }
    let bins = frame_len / 2 + 1;
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = rate as f64 / frame_len as f64;
    let mut fb = Array2::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut any = false;
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = ((f - lo) / (c - lo)).min((hi - f) / (hi - c)).max(0.0);
            if w > 0.0 {
                fb[[m, k]] = w;
                any = true;
            }
        }
        if !any {
            let k = ((c / bin_hz).round() as usize).min(bins - 1);
            fb[[m, k]] = 1.0;
        }
    }
    Ok(MelFilterbank {
        weights: fb,
        fmin,
        fmax,
    })
}

/// `ln(fb . |X|^2 + 1e-10)` per frame.
pub fn log_mel(spec: &Spectrogram, fb: &MelFilterbank) -> Result<MelSpectrogram, DspError> {
    if fb.bins() != spec.bins() {
        return Err(DspError::DimMismatch {
            fb: fb.bins(),
            spec: spec.bins(),
        });
    }
    let power = spec.magnitudes.mapv(|m| m * m);
    let values = power.dot(&fb.weights.t()).mapv(|e| (e + LOG_FLOOR).ln());
    Ok(MelSpectrogram {
        values,
        n_mels: fb.n_mels(),
        fmin: fb.fmin,
        fmax: fb.fmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioBuffer;
    use crate::dsp::stft;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn rows_cover_and_centers_increase() {
        for &(n, len, rate) in &[(40usize, 1024usize, 16000u32), (128, 512, 16000), (80, 2048, 44100)] {
            let fb = mel_filterbank(n, len, rate, 0.0, rate as f64 / 2.0).unwrap();
            let mut last_peak = -1.0;
            for row in fb.weights.rows() {
                assert!(row.iter().any(|&w| w > 0.0));
                assert!(row.iter().all(|&w| w >= 0.0));
                // weighted centroid as a proxy for the center
                let s: f64 = row.sum();
                let c = row.iter().enumerate().map(|(k, w)| k as f64 * w).sum::<f64>() / s;
                assert!(c >= last_peak);
                last_peak = c;
            }
        }
    }

    #[test]
    fn first_filter_peak_matches_recomputed_breakpoints() {
        // Oracle: breakpoints via natural-log form of the HTK scale, triangle
        // evaluated only at the two bins bracketing the center.
        let (n_mels, len, rate) = (40usize, 1024usize, 16000.0f64);
        let mel_max = 2595.0 * (1.0f64 + 8000.0 / 700.0).ln() / std::f64::consts::LN_10;
        let to_hz = |m: f64| 700.0 * ((m * std::f64::consts::LN_10 / 2595.0).exp() - 1.0);
        let step = mel_max / (n_mels + 1) as f64;
        let (lo, c, hi) = (0.0, to_hz(step), to_hz(2.0 * step));
        let bin_hz = rate / len as f64;
        let below = (c / bin_hz).floor();
        let w = |k: f64| {
            let f = k * bin_hz;
            ((f - lo) / (c - lo)).min((hi - f) / (hi - c)).max(0.0)
        };
        let expect = if w(below + 1.0) > w(below) { below + 1.0 } else { below } as usize;

        let fb = mel_filterbank(n_mels, len, 16000, 0.0, 8000.0).unwrap();
        let argmax = fb
            .weights
            .row(0)
            .iter()
            .enumerate()
            .fold((0, -1.0), |a, (i, &v)| if v > a.1 { (i, v) } else { a })
            .0;
        assert_eq!(argmax, expect);
    }

    #[test]
    fn bad_bands() {
        assert!(mel_filterbank(4, 1024, 16000, 0.0, 8000.0).is_err());
        assert!(mel_filterbank(40, 1024, 16000, 500.0, 400.0).is_err());
        assert!(mel_filterbank(40, 1024, 16000, 0.0, 9000.0).is_err());
    }

    #[test]
    fn zero_spectrogram_gives_log_floor() {
        let b = AudioBuffer::silence(1, 4096, 16000).unwrap();
        let s = stft(&b, 1024, 256).unwrap();
        let fb = mel_filterbank(40, 1024, 16000, 0.0, 8000.0).unwrap();
        let m = log_mel(&s, &fb).unwrap();
        assert!(m.values.iter().all(|&v| (v - LOG_FLOOR.ln()).abs() < 1e-12));
        assert!((LOG_FLOOR.ln() + 23.026).abs() < 1e-3);
    }

    #[test]
    fn doubling_gain_shifts_by_ln4() {
        let mut r = seeded(9);
        let x: Vec<f64> = (0..8192).map(|_| r.gen_range(-0.25..0.25)).collect();
        let a = AudioBuffer::from_mono(x, 16000).unwrap();
        let fb = mel_filterbank(40, 1024, 16000, 0.0, 8000.0).unwrap();
        let m1 = log_mel(&stft(&a, 1024, 256).unwrap(), &fb).unwrap();
        let m2 = log_mel(&stft(&a.scaled(2.0), 1024, 256).unwrap(), &fb).unwrap();
        for (v1, v2) in m1.values.iter().zip(m2.values.iter()) {
            assert!((v2 - v1 - 4f64.ln()).abs() < 1e-6);
        }
    }

    #[test]
    fn log_mel_is_monotone() {
        let mut r = seeded(2);
        let mags = Array2::from_shape_fn((5, 513), |_| r.gen_range(0.0..1.0));
        let bigger = &mags + &Array2::from_shape_fn((5, 513), |_| r.gen_range(0.0..0.5));
        let spec = |m: Array2<f64>| Spectrogram {
            magnitudes: m,
            frame_len: 1024,
            hop: 256,
            sample_rate: 16000,
        };
        let fb = mel_filterbank(40, 1024, 16000, 0.0, 8000.0).unwrap();
        let a = log_mel(&spec(mags), &fb).unwrap();
        let b = log_mel(&spec(bigger), &fb).unwrap();
        assert!(a.values.iter().zip(b.values.iter()).all(|(x, y)| y >= x));
    }

    #[test]
    fn dim_mismatch() {
        let fb = mel_filterbank(40, 512, 16000, 0.0, 8000.0).unwrap();
        let b = AudioBuffer::silence(1, 4096, 16000).unwrap();
        let s = stft(&b, 1024, 256).unwrap();
        assert!(matches!(log_mel(&s, &fb), Err(DspError::DimMismatch { .. })));
    }
}
