use super::BeatError;
use crate::dsp::OnsetEnvelope;

pub const MIN_BPM: f64 = 60.0;
pub const MAX_BPM: f64 = 200.0;
const PRIOR_CENTER_BPM: f64 = 120.0;
/// Width of the log-Gaussian tempo prior, in octaves.
const PRIOR_OCTAVES: f64 = 1.0;
/// Lag search range before octave folding.
const SEARCH_BPM: (f64, f64) = (30.0, 320.0);
/// Minimum normalized autocorrelation at the chosen lag.
pub const PERIODICITY_THRESHOLD: f64 = 0.25;
const MIN_SECONDS: f64 = 4.0;

fn prior(bpm: f64) -> f64 {
    let octaves = (bpm / PRIOR_CENTER_BPM).log2() / PRIOR_OCTAVES;
    (-0.5 * octaves * octaves).exp()
}

/// Tempo from the prior-weighted autocorrelation of the envelope, folded
/// by octaves into `[60, 200]` BPM.
pub fn estimate_tempo(env: &OnsetEnvelope) -> Result<f64, BeatError> {
    if env.duration_s() < MIN_SECONDS {
        return Err(BeatError::TooShort(format!(
            "{:.2} s of onset frames, need {MIN_SECONDS}",
            env.duration_s()
        )));
    }
    let n = env.len();
    let mean = env.values.iter().sum::<f64>() / n as f64;
    // triangular smoothing keeps peaks at fractional lags from splitting
    // across two integer lags
    let kernel = [1.0, 2.0, 3.0, 2.0, 1.0];
    let x: Vec<f64> = (0..n)
        .map(|i| {
            (0..kernel.len())
                .filter_map(|k| (i + k).checked_sub(2).filter(|&j| j < n).map(|j| kernel[k] * (env.values[j] - mean)))
                .sum::<f64>()
                / 9.0
        })
        .collect();
    let lag_of = |bpm: f64| 60.0 / (bpm * env.hop_s);
    let min_lag = lag_of(SEARCH_BPM.1).floor().max(1.0) as usize;
    let max_lag = (lag_of(SEARCH_BPM.0).ceil() as usize).min(n - 2);
    let ac: Vec<f64> = (0..=max_lag + 1)
        .map(|lag| x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum())
        .collect();
    if !(ac[0] > 0.0) {
        return Err(BeatError::NoPeriodicity);
    }

    let mut best: Option<(usize, f64)> = None;
    for lag in min_lag..=max_lag {
        let bpm = 60.0 / (lag as f64 * env.hop_s);
        let score = ac[lag] / ac[0] * prior(bpm);
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((lag, score));
        }
    }
    let (lag, _) = best.ok_or_else(|| BeatError::TooShort("no admissible lags".into()))?;
    if ac[lag] / ac[0] < PERIODICITY_THRESHOLD {
        return Err(BeatError::NoPeriodicity);
    }
    // parabolic refinement on the raw autocorrelation
    let (a, b, c) = (ac[lag - 1], ac[lag], ac[lag + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    let mut bpm = 60.0 / ((lag as f64 + shift) * env.hop_s);
    while bpm < MIN_BPM {
        bpm *= 2.0;
    }
    while bpm > MAX_BPM {
        bpm /= 2.0;
    }
    Ok(bpm)
}
