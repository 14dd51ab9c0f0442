use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::DspError;
use crate::audio::AudioBuffer;

/// Magnitude spectrogram, `[frames x (frame_len/2 + 1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Array2<f64>,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.magnitudes.nrows()
    }

    pub fn bins(&self) -> usize {
        self.magnitudes.ncols()
    }
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

pub(crate) fn stft_samples(
    x: &[f64],
    frame_len: usize,
    hop: usize,
    sample_rate: u32,
) -> Result<Spectrogram, DspError> {
    if !frame_len.is_power_of_two() || hop == 0 || hop > frame_len {
        return Err(DspError::BadFrameParams { frame_len, hop });
    }
    let bins = frame_len / 2 + 1;
    let frames = if x.len() >= frame_len {
        1 + (x.len() - frame_len) / hop
    } else {
        0
    };
    let window = hann_window(frame_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_len);
    let mut mags = Array2::zeros((frames, bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_len];
    for f in 0..frames {
        let seg = &x[f * hop..f * hop + frame_len];
        for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, c) in buf[..bins].iter().enumerate() {
            mags[[f, k]] = c.norm();
        }
    }
    Ok(Spectrogram {
        magnitudes: mags,
        frame_len,
        hop,
        sample_rate,
    })
}

/// Hann-windowed magnitude STFT without centering padding.
pub fn stft(mono: &AudioBuffer, frame_len: usize, hop: usize) -> Result<Spectrogram, DspError> {
    stft_samples(mono.mono()?, frame_len, hop, mono.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::test_util::sine;

    #[test]
    fn frame_count_formula() {
        let b = AudioBuffer::silence(1, 16000, 16000).unwrap();
        let s = stft(&b, 1024, 256).unwrap();
        assert_eq!(s.frames(), 59);
        assert_eq!(s.bins(), 513);
        assert!(s.magnitudes.iter().all(|&m| m == 0.0));
        let short = AudioBuffer::silence(1, 1000, 16000).unwrap();
        assert_eq!(stft(&short, 1024, 256).unwrap().frames(), 0);
    }

    #[test]
    fn tone_lands_in_expected_bin() {
        let b = AudioBuffer::from_mono(sine(1000.0, 16000, 16000, 0.5), 16000).unwrap();
        let s = stft(&b, 1024, 256).unwrap();
        for row in s.magnitudes.rows() {
            let argmax = row
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a })
                .0;
            assert_eq!(argmax, 64);
            // energy concentration within +-2 bins
            let total: f64 = row.iter().map(|m| m * m).sum();
            let near: f64 = row.iter().skip(62).take(5).map(|m| m * m).sum();
            assert!(near / total >= 0.9);
        }
    }

    #[test]
    fn bad_params() {
        let b = AudioBuffer::silence(1, 4096, 16000).unwrap();
        assert!(stft(&b, 1000, 256).is_err());
        assert!(stft(&b, 1024, 0).is_err());
        assert!(stft(&b, 1024, 2048).is_err());
        let st = AudioBuffer::silence(2, 4096, 16000).unwrap();
        assert!(stft(&st, 1024, 256).is_err());
    }
}
