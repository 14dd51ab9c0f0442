use super::{BeatError, METER};
use crate::dsp::OnsetEnvelope;

/// Weight of the tempo-regularity penalty in the beat DP.
pub const TIGHTNESS: f64 = 100.0;

/// Dynamic-programming beat placement.
///
/// Maximizes `sum onset(b_i) - TIGHTNESS * sum ln(d_i / period)^2` over beat
/// sequences, where `d_i` is the spacing between consecutive beats and the
/// onset envelope is normalized to unit standard deviation. Leading and
/// trailing beats whose strength (envelope summed over +-1 frame) falls under
/// half the RMS strength at beats are trimmed. Returns beat times in seconds,
/// strictly increasing.
pub fn track_beats(env: &OnsetEnvelope, bpm: f64) -> Result<Vec<f64>, BeatError> {
    if !(bpm > 0.0 && bpm.is_finite()) {
        return Err(BeatError::TooShort(format!("invalid tempo {bpm}")));
    }
    let period = 60.0 / (bpm * env.hop_s);
    let n = env.len();
    if (n as f64) < 2.0 * period {
        return Err(BeatError::TooShort(format!(
            "{n} frames is less than two beat periods"
        )));
    }
    let mean = env.values.iter().sum::<f64>() / n as f64;
    let sd = (env.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if sd == 0.0 {
        return Ok(Vec::new());
    }
    let onset: Vec<f64> = env.values.iter().map(|v| v / sd).collect();

    let far = (2.0 * period).round() as usize;
    let near = ((period / 2.0).round() as usize).max(1);
    let penalty: Vec<f64> = (0..=far)
        .map(|d| {
            if d < near {
                f64::NEG_INFINITY
            } else {
                let r = (d as f64 / period).ln();
                -TIGHTNESS * r * r
            }
        })
        .collect();

    let mut score = vec![0.0; n];
    let mut back: Vec<Option<usize>> = vec![None; n];
    for t in 0..n {
        let mut best: Option<(usize, f64)> = None;
        if t >= near {
            let lo = t.saturating_sub(far);
            for p in lo..=t - near {
                let s = score[p] + penalty[t - p];
                if best.map_or(true, |(_, b)| s > b) {
                    best = Some((p, s));
                }
            }
        }
        match best {
            Some((p, s)) => {
                score[t] = onset[t] + s;
                back[t] = Some(p);
            }
            None => score[t] = onset[t],
        }
    }

    let tail = n.saturating_sub(period.round() as usize).min(n - 1);
    let mut t = (tail..n)
        .fold((tail, f64::MIN), |a, i| if score[i] > a.1 { (i, score[i]) } else { a })
        .0;
    let mut frames = vec![t];
    while let Some(p) = back[t] {
        frames.push(p);
        t = p;
    }
    frames.reverse();

    let strength: Vec<f64> = frames.iter().map(|&f| strength_at(env, env.frame_time(f as f64))).collect();
    let rms = (strength.iter().map(|s| s * s).sum::<f64>() / strength.len() as f64).sqrt();
    let keep = |s: &f64| *s >= 0.5 * rms;
    let first = strength.iter().position(keep);
    let last = strength.iter().rposition(keep);
    let frames = match (first, last) {
        (Some(a), Some(b)) => &frames[a..=b],
        _ => &frames[..0],
    };
    Ok(frames.iter().map(|&f| env.frame_time(f as f64)).collect())
}

/// Onset strength at a beat: envelope summed over the frames within one hop,
/// so an onset split across two frames still counts in full.
fn strength_at(env: &OnsetEnvelope, t: f64) -> f64 {
    let f = env.frame_at(t);
    let lo = f.saturating_sub(1);
    let hi = (f + 1).min(env.len() - 1);
    env.values[lo..=hi].iter().sum()
}

/// Picks the 4/4 phase whose beats carry the largest mean onset strength and
/// returns every fourth beat from it. Ties go to the lowest phase.
pub fn pick_downbeats(beats: &[f64], env: &OnsetEnvelope) -> Result<Vec<f64>, BeatError> {
    if beats.len() < 2 * METER {
        return Err(BeatError::TooFewBeats(beats.len()));
    }
    if env.is_empty() {
        return Err(BeatError::TooShort("empty onset envelope".into()));
    }
    let strengths: Vec<f64> = beats.iter().map(|&b| strength_at(env, b)).collect();
    let phase_mean = |phase: usize| {
        let picked: Vec<f64> = strengths.iter().skip(phase).step_by(METER).cloned().collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    let mut best = (0usize, phase_mean(0));
    for phase in 1..METER {
        let mean = phase_mean(phase);
        if mean > best.1 + 1e-12 * best.1.abs() {
            best = (phase, mean);
        }
    }
    Ok(beats.iter().skip(best.0).step_by(METER).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HOP_S: f64 = 256.0 / 16000.0;

    fn env_with_pulses(times: &[(f64, f64)], secs: f64) -> OnsetEnvelope {
        let n = (secs / HOP_S) as usize;
        let mut v = vec![0.0; n];
        for &(t, a) in times {
            let f = (t / HOP_S).round() as usize;
            if f < n {
                v[f] += a;
            }
        }
        OnsetEnvelope::new(v, HOP_S)
    }

    #[test]
    fn follows_a_steady_pulse() {
        let clicks: Vec<(f64, f64)> = (0..40).map(|k| (0.5 * k as f64 + 0.1, 1.0)).collect();
        let env = env_with_pulses(&clicks, 20.0);
        let beats = track_beats(&env, 120.0).unwrap();
        assert!(beats.windows(2).all(|w| w[1] > w[0]));
        assert!((beats.len() as i64 - 40).abs() <= 1, "{}", beats.len());
        for (c, _) in &clicks {
            let nearest = beats.iter().map(|b| (b - c).abs()).fold(f64::MAX, f64::min);
            assert!(nearest <= 0.02, "click {c}: {nearest}");
        }
    }

    #[test]
    fn single_click_keeps_at_most_one_beat() {
        let env = env_with_pulses(&[(5.0, 1.0)], 10.0);
        let beats = track_beats(&env, 120.0).unwrap();
        assert!(beats.len() <= 1, "{beats:?}");
        if let Some(b) = beats.first() {
            assert!((b - 5.0).abs() < 0.05);
        }
    }

    #[test]
    fn silence_yields_no_beats() {
        let env = OnsetEnvelope::new(vec![0.0; 800], HOP_S);
        assert!(track_beats(&env, 120.0).unwrap().is_empty());
        let short = OnsetEnvelope::new(vec![0.0; 40], HOP_S);
        assert!(matches!(track_beats(&short, 120.0), Err(BeatError::TooShort(_))));
    }

    #[test]
    fn downbeat_phase_follows_accents() {
        for accent_phase in 0..4 {
            let pulses: Vec<(f64, f64)> = (0..32)
                .map(|k| (0.5 * k as f64, if k % 4 == accent_phase { 2.0 } else { 1.0 }))
                .collect();
            let env = env_with_pulses(&pulses, 16.5);
            let beats: Vec<f64> = pulses.iter().map(|p| p.0).collect();
            let db = pick_downbeats(&beats, &env).unwrap();
            assert_eq!(db[0], beats[accent_phase]);
            assert!(db.windows(2).all(|w| (w[1] - w[0] - 2.0).abs() < 1e-9));
        }
    }

    #[test]
    fn equal_strength_ties_to_phase_zero() {
        let pulses: Vec<(f64, f64)> = (0..16).map(|k| (0.5 * k as f64, 1.0)).collect();
        let env = env_with_pulses(&pulses, 9.0);
        let beats: Vec<f64> = pulses.iter().map(|p| p.0).collect();
        assert_eq!(pick_downbeats(&beats, &env).unwrap()[0], 0.0);
        assert!(matches!(
            pick_downbeats(&beats[..7], &env),
            Err(BeatError::TooFewBeats(7))
        ));
    }
}
