use rand::Rng;

use super::{pitch_shift, time_stretch, AudioBuffer, AudioError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    PitchShift(i32),
    TimeStretch(f64),
}

impl Transform {
    pub fn apply(self, buf: &AudioBuffer) -> Result<AudioBuffer, AudioError> {
        match self {
            Transform::PitchShift(s) => pitch_shift(buf, s),
            Transform::TimeStretch(f) => time_stretch(buf, f),
        }
    }
}

/// Training-time augmentation: with `probability`, one transform drawn
/// uniformly from the pitch and stretch options.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    pub pitch_semitones: Vec<i32>,
    pub stretch_factors: Vec<f64>,
    pub probability: f64,
    pub enabled_when_extractor_trainable: bool,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            pitch_semitones: vec![-2, 2],
            stretch_factors: vec![0.8, 1.25],
            probability: 0.5,
            enabled_when_extractor_trainable: true,
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        Self {
            probability: 0.0,
            enabled_when_extractor_trainable: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(AudioError::OutOfRangeFactor(self.probability));
        }
        if let Some(&f) = self.stretch_factors.iter().find(|&&f| !(f > 0.0)) {
            return Err(AudioError::OutOfRangeFactor(f));
        }
        Ok(())
    }

    fn options(&self) -> Vec<Transform> {
        self.pitch_semitones
            .iter()
            .map(|&s| Transform::PitchShift(s))
            .chain(self.stretch_factors.iter().map(|&f| Transform::TimeStretch(f)))
            .collect()
    }

    /// One Bernoulli(probability) draw, then a uniform pick among the options.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Transform> {
        let options = self.options();
        if options.is_empty() || rng.gen::<f64>() >= self.probability {
            return None;
        }
        Some(options[rng.gen_range(0..options.len())])
    }
}

/// Applies the policy only when the feature extractor is trainable.
pub fn augment<R: Rng + ?Sized>(
    buf: &AudioBuffer,
    policy: &AugmentPolicy,
    extractor_trainable: bool,
    rng: &mut R,
) -> Result<AudioBuffer, AudioError> {
    if !extractor_trainable || !policy.enabled_when_extractor_trainable {
        return Ok(buf.clone());
    }
    match policy.draw(rng) {
        Some(t) => t.apply(buf),
        None => Ok(buf.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn noise(n: usize) -> AudioBuffer {
        let mut r = seeded(3);
        AudioBuffer::from_mono((0..n).map(|_| r.gen_range(-0.5..0.5)).collect(), 16000).unwrap()
    }

    #[test]
    fn frozen_extractor_is_identity() {
        let b = noise(4096);
        let mut rng = seeded(1);
        let p = AugmentPolicy {
            probability: 1.0,
            ..Default::default()
        };
        for _ in 0..20 {
            assert_eq!(augment(&b, &p, false, &mut rng).unwrap(), b);
        }
    }

    #[test]
    fn zero_probability_is_identity() {
        let b = noise(4096);
        let p = AugmentPolicy {
            probability: 0.0,
            ..Default::default()
        };
        let mut rng = seeded(1);
        for _ in 0..20 {
            assert_eq!(augment(&b, &p, true, &mut rng).unwrap(), b);
        }
    }

    #[test]
    fn bernoulli_rate_seed_7() {
        let p = AugmentPolicy::default();
        let mut rng = seeded(7);
        let applied = (0..10_000).filter(|_| p.draw(&mut rng).is_some()).count();
        // mean 5000, sd 50
        assert!((4850..=5150).contains(&applied), "{applied}");
    }

    #[test]
    fn every_option_is_reachable_and_seeded() {
        let p = AugmentPolicy {
            probability: 1.0,
            ..Default::default()
        };
        let draws: Vec<_> = {
            let mut rng = seeded(11);
            (0..200).map(|_| p.draw(&mut rng).unwrap()).collect()
        };
        for t in p.options() {
            assert!(draws.contains(&t));
        }
        let mut rng = seeded(11);
        let again: Vec<_> = (0..200).map(|_| p.draw(&mut rng).unwrap()).collect();
        assert_eq!(draws, again);
    }

    #[test]
    fn applied_transform_changes_audio_deterministically() {
        let b = noise(8192);
        let p = AugmentPolicy {
            probability: 1.0,
            ..Default::default()
        };
        let a1 = augment(&b, &p, true, &mut seeded(5)).unwrap();
        let a2 = augment(&b, &p, true, &mut seeded(5)).unwrap();
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
        assert!(a1.channel(0).iter().all(|v| v.is_finite()));
    }
}
