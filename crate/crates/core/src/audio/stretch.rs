//! Phase-vocoder time stretching and the pitch shifter built on top of it.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::resample::resample_ratio;
use super::{AudioBuffer, AudioError};

pub const STRETCH_FRAME: usize = 1024;
pub const STRETCH_HOP: usize = 256;

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

fn wrap_phase(p: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    p - tau * ((p + std::f64::consts::PI) / tau).floor()
}

/// Stretches one channel; `factor` is a playback-speed multiplier, so the
/// output holds `round(len / factor)` samples.
fn stretch_channel(x: &[f64], factor: f64) -> Vec<f64> {
    let n_fft = STRETCH_FRAME;
    let hop = STRETCH_HOP;
    let out_len = (x.len() as f64 / factor).round() as usize;
    if x.is_empty() {
        return vec![0.0; out_len];
    }
    let bins = n_fft / 2 + 1;
    let window = hann(n_fft);

    // centered framing: pad half a frame on both sides
    let pad = n_fft / 2;
    let mut padded = vec![0.0; x.len() + 2 * pad];
    padded[pad..pad + x.len()].copy_from_slice(x);
    let n_frames = 1 + (padded.len().saturating_sub(n_fft)) / hop;

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let ifft = planner.plan_fft_inverse(n_fft);

    let mut spectra: Vec<Vec<Complex64>> = Vec::with_capacity(n_frames + 1);
    let mut scratch = vec![Complex64::new(0.0, 0.0); n_fft];
    for f in 0..n_frames {
        let start = f * hop;
        for i in 0..n_fft {
            let s = padded.get(start + i).copied().unwrap_or(0.0);
            scratch[i] = Complex64::new(s * window[i], 0.0);
        }
        fft.process(&mut scratch);
        spectra.push(scratch[..bins].to_vec());
    }
    spectra.push(vec![Complex64::new(0.0, 0.0); bins]);

    let advance: Vec<f64> = (0..bins)
        .map(|b| std::f64::consts::TAU * b as f64 * hop as f64 / n_fft as f64)
        .collect();
    let mut phase: Vec<f64> = spectra[0].iter().map(|c| c.arg()).collect();

    let mut steps = Vec::new();
    let mut t = 0.0;
    while t < n_frames as f64 {
        steps.push(t);
        t += factor;
    }

    let total = (steps.len() - 1) * hop + n_fft;
    let mut out = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let mut frame = vec![Complex64::new(0.0, 0.0); n_fft];
    for (k, &step) in steps.iter().enumerate() {
        let i = step.floor() as usize;
        let alpha = step - i as f64;
        let (a, b) = (&spectra[i], &spectra[i + 1]);
        for bin in 0..bins {
            let mag = (1.0 - alpha) * a[bin].norm() + alpha * b[bin].norm();
            frame[bin] = Complex64::from_polar(mag, phase[bin]);
            let dphi = b[bin].arg() - a[bin].arg() - advance[bin];
            phase[bin] += advance[bin] + wrap_phase(dphi);
        }
        for bin in 1..n_fft - bins + 1 {
            frame[n_fft - bin] = frame[bin].conj();
        }
        ifft.process(&mut frame);
        let start = k * hop;
        for i in 0..n_fft {
            out[start + i] += frame[i].re / n_fft as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    let floor = norm.iter().cloned().fold(0.0, f64::max) * 1e-3;
    let mut y: Vec<f64> = out
        .iter()
        .zip(&norm)
        .skip(pad)
        .map(|(&v, &w)| if w > floor { v / w } else { v / floor.max(1e-12) })
        .collect();
    y.resize(out_len, 0.0);
    y
}

/// Phase-vocoder time stretch; `factor` in `[0.5, 2.0]` is a speed multiplier.
pub fn time_stretch(buf: &AudioBuffer, factor: f64) -> Result<AudioBuffer, AudioError> {
    if !(0.5..=2.0).contains(&factor) {
        return Err(AudioError::OutOfRangeFactor(factor));
    }
    if factor == 1.0 {
        return Ok(buf.clone());
    }
    buf.map_channels(buf.sample_rate(), |ch| Ok(stretch_channel(ch, factor)))
}

/// Shifts pitch by `semitones` keeping the duration: resample by
/// `2^(-s/12)`, then stretch back by the same speed factor.
pub fn pitch_shift(buf: &AudioBuffer, semitones: i32) -> Result<AudioBuffer, AudioError> {
    if semitones.abs() > 12 {
        return Err(AudioError::OutOfRangeShift(semitones));
    }
    if semitones == 0 {
        return Ok(buf.clone());
    }
    let r = 2f64.powf(-semitones as f64 / 12.0);
    let n = buf.frames();
    buf.map_channels(buf.sample_rate(), |ch| {
        let squeezed = resample_ratio(ch, r);
        let mut y = stretch_channel(&squeezed, r);
        y.resize(n, 0.0);
        Ok(y)
    })
}
