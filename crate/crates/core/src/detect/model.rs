use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::{AudioCat, AudioCatConfig, DetectError, EmbeddingSequence, Features, FxSegConfig, FxSegment};
use super::{SegTrConfig, SegmentTransformer};
use crate::nn::{load_checkpoint, sigmoid, AttentionConfig, Checkpoint, Graph, ParamStore, Var};

/// Result of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutput {
    pub logit: f64,
    /// `sigmoid(logit)`; probability of the AI-generated class.
    pub probability: f64,
    /// Penultimate representation fed to the head.
    pub pooled: Vec<f64>,
}

impl DetectorOutput {
    pub fn new(logit: f64, pooled: Vec<f64>) -> Self {
        Self {
            logit,
            probability: sigmoid(logit),
            pooled,
        }
    }
}

/// 1 (AI-generated) iff `probability >= threshold`.
pub fn predict(out: &DetectorOutput, threshold: f64) -> u8 {
    u8::from(out.probability >= threshold)
}

/// Tape handles produced by a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub logit: Var,
    pub pooled: Var,
    /// The extractor output as recorded on the tape (a constant).
    pub input: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    AudioCat,
    FxSeg,
    SegTr,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::AudioCat => "audiocat",
            Arch::FxSeg => "fxseg",
            Arch::SegTr => "segtr",
        }
    }

    pub fn stage(self) -> u8 {
        match self {
            Arch::SegTr => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "audiocat" => Ok(Arch::AudioCat),
            "fxseg" => Ok(Arch::FxSeg),
            "segtr" => Ok(Arch::SegTr),
            _ => Err(DetectError::UnknownPreset(s.to_string())),
        }
    }
}

pub trait Detector {
    type Input;

    fn arch(&self) -> Arch;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Architecture hyperparameters as checkpoint metadata.
    fn meta(&self) -> Vec<(String, String)>;
    fn input_from(&self, features: Features) -> Result<Self::Input, DetectError>;
    fn forward_on(&self, g: &mut Graph, x: &Self::Input) -> Result<ForwardVars, DetectError>;
    /// Zeroes the classification head, so every input maps to probability 0.5.
    fn zero_head(&mut self);

    fn forward(&self, x: &Self::Input) -> Result<DetectorOutput, DetectError> {
        let mut g = Graph::new();
        let v = self.forward_on(&mut g, x)?;
        g.check_finite()?;
        Ok(DetectorOutput::new(g.scalar(v.logit), g.value(v.pooled).iter().cloned().collect()))
    }

    fn checkpoint(&self, extra: &[(String, String)]) -> Checkpoint {
        let mut meta = self.meta();
        meta.extend_from_slice(extra);
        Checkpoint::from_store(self.params(), &meta)
    }
}

pub(crate) fn meta_get<T: FromStr>(ck: &Checkpoint, key: &str) -> Result<T, DetectError> {
    ck.meta(key)
        .ok_or_else(|| DetectError::Checkpoint(format!("missing metadata {key:?}")))?
        .parse()
        .map_err(|_| DetectError::Checkpoint(format!("bad metadata {key:?}")))
}

pub(crate) fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

pub(crate) fn attn_meta(cfg: &AttentionConfig) -> Vec<(String, String)> {
    vec![
        kv("d_model", cfg.model_dim),
        kv("heads", cfg.heads),
        kv("ffn", cfg.ffn_dim),
        kv("dropout", cfg.dropout),
    ]
}

pub(crate) fn attn_from_meta(ck: &Checkpoint) -> Result<AttentionConfig, DetectError> {
    let mut cfg = AttentionConfig::new(meta_get(ck, "d_model")?, meta_get(ck, "heads")?, meta_get(ck, "ffn")?);
    cfg.dropout = meta_get(ck, "dropout")?;
    Ok(cfg)
}

/// Validity mask of a sequence, rejecting empty or fully masked input.
pub(crate) fn check_sequence(seq: &EmbeddingSequence, d_enc: usize) -> Result<(), DetectError> {
    if seq.is_empty() {
        return Err(DetectError::EmptySequence);
    }
    if seq.dim() != d_enc {
        return Err(DetectError::DimMismatch {
            expected: d_enc,
            got: seq.dim(),
        });
    }
    if seq.valid_count() == 0 {
        return Err(DetectError::AllMasked);
    }
    Ok(())
}

/// Any of the three architectures, as restored from a checkpoint.
#[derive(Debug, Clone)]
pub enum AnyDetector {
    AudioCat(AudioCat),
    FxSeg(FxSegment),
    SegTr(SegmentTransformer),
}

impl AnyDetector {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, DetectError> {
        let arch: Arch = meta_get(ck, "arch")?;
        let mut det = match arch {
            Arch::AudioCat => AnyDetector::AudioCat(AudioCat::new(AudioCatConfig::from_meta(ck)?, 0)?),
            Arch::FxSeg => AnyDetector::FxSeg(FxSegment::new(FxSegConfig::from_meta(ck)?, 0)?),
            Arch::SegTr => AnyDetector::SegTr(SegmentTransformer::new(SegTrConfig::from_meta(ck)?, 0)?),
        };
        ck.apply(det.params_mut())?;
        Ok(det)
    }
}

impl Detector for AnyDetector {
    type Input = Features;

    fn arch(&self) -> Arch {
        match self {
            AnyDetector::AudioCat(m) => m.arch(),
            AnyDetector::FxSeg(m) => m.arch(),
            AnyDetector::SegTr(m) => m.arch(),
        }
    }

    fn params(&self) -> &ParamStore {
        match self {
            AnyDetector::AudioCat(m) => m.params(),
            AnyDetector::FxSeg(m) => m.params(),
            AnyDetector::SegTr(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            AnyDetector::AudioCat(m) => m.params_mut(),
            AnyDetector::FxSeg(m) => m.params_mut(),
            AnyDetector::SegTr(m) => m.params_mut(),
        }
    }

    fn meta(&self) -> Vec<(String, String)> {
        match self {
            AnyDetector::AudioCat(m) => m.meta(),
            AnyDetector::FxSeg(m) => m.meta(),
            AnyDetector::SegTr(m) => m.meta(),
        }
    }

    fn input_from(&self, features: Features) -> Result<Features, DetectError> {
        Ok(features)
    }

    fn forward_on(&self, g: &mut Graph, x: &Features) -> Result<ForwardVars, DetectError> {
        match self {
            AnyDetector::AudioCat(m) => m.forward_on(g, &m.input_from(x.clone())?),
            AnyDetector::FxSeg(m) => m.forward_on(g, &m.input_from(x.clone())?),
            AnyDetector::SegTr(m) => m.forward_on(g, &m.input_from(x.clone())?),
        }
    }

    fn zero_head(&mut self) {
        match self {
            AnyDetector::AudioCat(m) => m.zero_head(),
            AnyDetector::FxSeg(m) => m.zero_head(),
            AnyDetector::SegTr(m) => m.zero_head(),
        }
    }
}

impl From<EmbeddingSequence> for Features {
    fn from(seq: EmbeddingSequence) -> Self {
        Features::Sequence(seq)
    }
}

/// Restores a detector and returns the checkpoint for its remaining metadata.
pub fn load_detector(path: &Path) -> Result<(AnyDetector, Checkpoint), DetectError> {
    let ck = load_checkpoint(path)?;
    Ok((AnyDetector::from_checkpoint(&ck)?, ck))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_rule() {
        let at = |p: f64| DetectorOutput {
            logit: 0.0,
            probability: p,
            pooled: vec![],
        };
        assert_eq!(predict(&at(0.5), 0.5), 1);
        assert_eq!(predict(&at(0.49), 0.5), 0);
        let probs = [0.05, 0.2, 0.31, 0.5, 0.52, 0.77, 0.9, 0.95];
        let mut last = usize::MAX;
        for t in 1..=9 {
            let n = probs.iter().filter(|&&p| predict(&at(p), t as f64 / 10.0) == 1).count();
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn output_probability_is_sigmoid() {
        let o = DetectorOutput::new(1.3, vec![]);
        assert_eq!(o.probability, sigmoid(1.3));
        assert_eq!(DetectorOutput::new(0.0, vec![]).probability, 0.5);
    }

    #[test]
    fn arch_names_round_trip() {
        for a in [Arch::AudioCat, Arch::FxSeg, Arch::SegTr] {
            assert_eq!(a.name().parse::<Arch>().unwrap(), a);
        }
        assert!("cnn".parse::<Arch>().is_err());
    }
}
