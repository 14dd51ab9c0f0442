//! Synthetic two-class corpus.
//!
//! Both classes draw bars from the same per-track pool of eight one-bar
//! patterns (click + harmonic tones, four beats). Class 0 plays them as
//! 4-bar sections in AABA order with accented downbeats; class 1 picks every
//! bar at random and accents a random beat of each bar.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::{write_manifest, Entry, Manifest, TrainError};
use crate::audio::{save_wav, AudioBuffer};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub duration_s: f64,
    pub bpm_range: (f64, f64),
    pub sample_rate: u32,
    /// Amplitude of the background noise floor.
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            duration_s: 64.0,
            bpm_range: (90.0, 150.0),
            sample_rate: 16_000,
            noise: 0.003,
        }
    }
}

/// Everything needed to render one track deterministically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPlan {
    pub label: u8,
    pub bpm: f64,
    /// Silence before the first downbeat, in seconds.
    pub lead_in_s: f64,
    pub seed: u64,
}

const POOL: usize = 8;
const BEATS: usize = 4;
const SECTION_BARS: usize = 4;
const FORM: [usize; 4] = [0, 0, 1, 0]; // A A B A
const CLICK_S: f64 = 0.03;
const ACCENT: f64 = 0.6;
const PLAIN: f64 = 0.22;
const TONE_AMP: f64 = 0.18;

fn midi_hz(m: f64) -> f64 {
    440.0 * 2f64.powf((m - 69.0) / 12.0)
}

/// Tone layer of one bar: a note on every beat.
fn render_bar<R: Rng>(rng: &mut R, section: usize, beat: usize, rate: f64) -> Vec<f64> {
    // A bars sit in a lower register with a darker spectrum than B bars
    let (base, harmonics): (f64, &[f64]) = if section == 0 {
        (50.0, &[1.0, 0.6, 0.35, 0.2])
    } else {
        (62.0, &[1.0, 0.25, 0.5, 0.1, 0.3])
    };
    let scale = [0.0, 2.0, 4.0, 5.0, 7.0, 9.0, 11.0, 12.0];
    let note_len = (0.9 * beat as f64) as usize;
    let mut out = vec![0.0; BEATS * beat + note_len];
    for b in 0..BEATS {
        let m = base + scale[rng.gen_range(0..scale.len())];
        let f = midi_hz(m);
        let start = b * beat;
        for i in 0..note_len {
            let t = i as f64 / rate;
            let env = (-t / 0.18).exp() * (1.0 - (-t / 0.004).exp());
            let v: f64 = harmonics
                .iter()
                .enumerate()
                .map(|(h, a)| a * (TAU * f * (h + 1) as f64 * t).sin())
                .sum();
            out[start + i] += TONE_AMP * env * v;
        }
    }
    out
}

fn add_at(dst: &mut [f64], at: usize, src: &[f64], gain: f64) {
    for (d, s) in dst.iter_mut().skip(at).zip(src) {
        *d += gain * s;
    }
}

/// Renders a track at `spec.sample_rate`, peak-normalized to 0.9.
pub fn render_track(plan: &TrackPlan, spec: &SynthSpec) -> AudioBuffer {
    let mut rng = seeded(plan.seed);
    let rate = spec.sample_rate as f64;
    let beat_s = 60.0 / plan.bpm;
    let beat = (beat_s * rate).round() as usize;
    let pool: Vec<Vec<f64>> = (0..POOL).map(|k| render_bar(&mut rng, k / SECTION_BARS, beat, rate)).collect();
    let click_len = (CLICK_S * rate) as usize;
    let click: Vec<f64> = (0..click_len)
        .map(|i| rng.gen_range(-1.0..1.0) * (-(i as f64) / (0.006 * rate)).exp())
        .collect();

    let n = (spec.duration_s * rate).round() as usize;
    let mut x = vec![0.0; n];
    let bars = ((spec.duration_s - plan.lead_in_s) / (BEATS as f64 * beat_s)).ceil() as usize;
    for bar in 0..bars {
        let (pattern, accent) = if plan.label == 0 {
            let section = FORM[(bar / SECTION_BARS) % FORM.len()];
            (section * SECTION_BARS + bar % SECTION_BARS, 0)
        } else {
            (rng.gen_range(0..POOL), rng.gen_range(0..BEATS))
        };
        let t0 = plan.lead_in_s + (bar * BEATS) as f64 * beat_s;
        add_at(&mut x, (t0 * rate).round() as usize, &pool[pattern], 1.0);
        for b in 0..BEATS {
            let at = ((t0 + b as f64 * beat_s) * rate).round() as usize;
            add_at(&mut x, at, &click, if b == accent { ACCENT } else { PLAIN });
        }
    }
    for v in x.iter_mut() {
        *v += spec.noise * rng.gen_range(-1.0..1.0);
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    AudioBuffer::from_mono(x, spec.sample_rate).expect("valid synthetic rate")
}

/// `n_per_class` plans per class, class 0 first, all derived from `seed`.
pub fn synth_plans(n_per_class: usize, seed: u64, spec: &SynthSpec) -> Vec<TrackPlan> {
    let mut rng = seeded(seed);
    (0..2 * n_per_class)
        .map(|k| {
            let bpm = rng.gen_range(spec.bpm_range.0..=spec.bpm_range.1);
            TrackPlan {
                label: u8::from(k >= n_per_class),
                bpm,
                lead_in_s: rng.gen_range(0.0..0.5),
                seed: rng.gen(),
            }
        })
        .collect()
}

/// Writes `2 * n_per_class` WAV files and `manifest.csv` into `dir`.
pub fn synth_dataset(n_per_class: usize, dir: &Path, seed: u64, spec: &SynthSpec) -> Result<Manifest, TrainError> {
    if n_per_class < 4 {
        return Err(TrainError::TooFewEntries {
            need: 4,
            got: n_per_class,
        });
    }
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (k, plan) in synth_plans(n_per_class, seed, spec).iter().enumerate() {
        let name = if plan.label == 0 { "human" } else { "ai" };
        let path: PathBuf = dir.join(format!("{name}_{:03}.wav", k % n_per_class));
        save_wav(&render_track(plan, spec), &path)?;
        entries.push(Entry {
            path,
            label: plan.label,
            split: None,
        });
    }
    let m = Manifest::new("synthetic", entries)?;
    write_manifest(&m, &dir.join("manifest.csv"))?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> SynthSpec {
        SynthSpec {
            duration_s: 12.0,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn plans_are_seeded_and_balanced() {
        let a = synth_plans(8, 1, &SynthSpec::default());
        assert_eq!(a.len(), 16);
        assert_eq!(a.iter().filter(|p| p.label == 1).count(), 8);
        assert_eq!(a, synth_plans(8, 1, &SynthSpec::default()));
        assert!(a.iter().all(|p| (90.0..=150.0).contains(&p.bpm)));
    }

    #[test]
    fn render_is_deterministic_and_bounded() {
        let p = synth_plans(4, 5, &short())[0];
        let a = render_track(&p, &short());
        assert_eq!(a.frames(), 12 * 16000);
        assert_eq!(a, render_track(&p, &short()));
        assert!(a.channel(0).iter().all(|v| v.abs() <= 0.9 + 1e-12));
    }
}
