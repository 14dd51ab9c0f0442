//! Band-limited rate conversion with a Kaiser-windowed sinc kernel.
//!
//! The kernel is tabulated once at `TABLE_DENSITY` points per zero crossing and
//! read back with linear interpolation, so every output phase gets its own
//! filter without precomputing a per-ratio polyphase bank.

use std::sync::OnceLock;

use super::{check_rate, AudioBuffer, AudioError};

const KAISER_BETA: f64 = 8.0;
/// Zero crossings of the kernel on each side of the center.
const HALF_TAPS: usize = 32;
const TABLE_DENSITY: usize = 512;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.95;

pub(crate) fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = HALF_TAPS * TABLE_DENSITY + 2;
        let norm = bessel_i0(KAISER_BETA);
        (0..n)
            .map(|i| {
                let z = i as f64 / TABLE_DENSITY as f64;
                if z >= HALF_TAPS as f64 {
                    return 0.0;
                }
                let u = z / HALF_TAPS as f64;
                let window = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / norm;
                let sinc = if z == 0.0 {
                    1.0
                } else {
                    let a = std::f64::consts::PI * z;
                    a.sin() / a
                };
                sinc * window
            })
            .collect()
    })
}

fn kernel_at(table: &[f64], z: f64) -> f64 {
    let pos = z.abs() * TABLE_DENSITY as f64;
    let i = pos as usize;
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = pos - i as f64;
    table[i] + frac * (table[i + 1] - table[i])
}

/// Resamples a single channel so that `out.len() == round(x.len() * ratio)`.
pub fn resample_ratio(x: &[f64], ratio: f64) -> Vec<f64> {
    assert!(ratio > 0.0 && ratio.is_finite(), "ratio must be positive");
    let out_len = (x.len() as f64 * ratio).round() as usize;
    if ratio == 1.0 {
        return x.to_vec();
    }
    let table = kernel_table();
    let cutoff = ratio.min(1.0) * ROLLOFF;
    let reach = (HALF_TAPS as f64 / cutoff).ceil() as isize;
    let n = x.len() as isize;
    (0..out_len)
        .map(|j| {
            let t = j as f64 / ratio;
            let center = t.floor() as isize;
            let lo = (center - reach + 1).max(0);
            let hi = (center + reach).min(n - 1);
            let mut acc = 0.0;
            for k in lo..=hi {
                acc += x[k as usize] * kernel_at(table, (t - k as f64) * cutoff);
            }
            acc * cutoff
        })
        .collect()
}

/// Converts every channel to `target_rate`.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer, AudioError> {
    check_rate(target_rate)?;
    if target_rate == buf.sample_rate() {
        return Ok(buf.clone());
    }
    let ratio = target_rate as f64 / buf.sample_rate() as f64;
    buf.map_channels(target_rate, |ch| Ok(resample_ratio(ch, ratio)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::test_util::{peak_frequency, sine};

    #[test]
    fn identity_at_same_rate() {
        let b = AudioBuffer::from_mono(sine(440.0, 16000, 1000, 0.5), 16000).unwrap();
        assert_eq!(resample(&b, 16000).unwrap(), b);
    }

    #[test]
    fn length_is_exact() {
        let b = AudioBuffer::silence(1, 44100, 44100).unwrap();
        assert_eq!(resample(&b, 16000).unwrap().frames(), 16000);
        for (n, from, to) in [(1001usize, 22050u32, 16000u32), (777, 16000, 48000), (12345, 48000, 44100)] {
            let b = AudioBuffer::silence(1, n, from).unwrap();
            let expect = (n as f64 * to as f64 / from as f64).round() as usize;
            assert_eq!(resample(&b, to).unwrap().frames(), expect);
        }
    }

    #[test]
    fn tone_survives_downsampling() {
        let b = AudioBuffer::from_mono(sine(1000.0, 44100, 44100, 0.5), 44100).unwrap();
        let r = resample(&b, 16000).unwrap();
        let y = r.channel(0);
        let (f, _) = peak_frequency(y, 16000);
        assert!((f - 1000.0).abs() <= 16000.0 / y.len() as f64 + 1e-9, "{f}");
        // amplitude away from the edges
        let mid = &y[2000..14000];
        let peak = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let loss_db = 20.0 * (0.5 / peak).log10();
        assert!(loss_db.abs() < 1.0, "{loss_db} dB");
    }

    #[test]
    fn rejects_invalid_rate() {
        let b = AudioBuffer::silence(1, 10, 16000).unwrap();
        assert!(matches!(resample(&b, 1000), Err(AudioError::InvalidRate(1000))));
    }
}
