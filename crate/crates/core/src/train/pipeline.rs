//! Two-stage experiment: stage-1 training on 4-bar segments, stage-2
//! training on per-track sequences of stage-1 pooled vectors.

use std::thread;

use ndarray::Array2;

use super::{evaluate, train, Dataset, EvalReport, FeatureSet, History, Manifest, Split, TrainConfig, TrainError};
use crate::audio::{load_wav, resample, to_mono, AudioBuffer};
use crate::beats::{analyze_track, segment_bars, BeatGrid, BARS_PER_SEGMENT};
use crate::detect::{
    extractor_preset, pad_or_crop, AudioCat, AudioCatConfig, Detector, EmbeddingSequence, FeatureExtractor, Features,
    SegTrConfig, SegmentTransformer,
};
use crate::nn::AttentionConfig;
use crate::ANALYSIS_RATE;

/// A labelled track at the analysis rate.
#[derive(Debug, Clone)]
pub struct Track {
    pub key: String,
    pub audio: AudioBuffer,
    pub label: u8,
    pub split: Split,
}

/// Loads every manifest entry (which must carry a split) as mono 16 kHz.
pub fn load_tracks(m: &Manifest) -> Result<Vec<Track>, TrainError> {
    m.entries
        .iter()
        .map(|e| {
            let split = e
                .split
                .ok_or_else(|| TrainError::BadManifest(format!("{} has no split", e.path.display())))?;
            let audio = resample(&to_mono(&load_wav(&e.path)?), ANALYSIS_RATE)?;
            let key = e.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(Track {
                key,
                audio,
                label: e.label,
                split,
            })
        })
        .collect()
}

/// Runs `f` over `items` on up to `jobs` threads, preserving order.
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<_>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Beat grid per track; `None` where analysis fails.
pub fn analyze_tracks(tracks: &[Track], jobs: usize) -> Vec<Option<BeatGrid>> {
    par_map(tracks, jobs, |t| analyze_track(&t.audio).ok().map(|a| a.grid))
}

/// Extractor output for every 4-bar segment of a track, or `None` when the
/// track could not be segmented.
#[derive(Debug, Clone)]
pub struct TrackFeatures {
    pub key: String,
    pub label: u8,
    pub split: Split,
    pub segments: Option<Vec<Features>>,
}

pub fn featurize_tracks(
    tracks: &[Track],
    grids: &[Option<BeatGrid>],
    extractor: &dyn FeatureExtractor,
    jobs: usize,
) -> Result<Vec<TrackFeatures>, TrainError> {
    let pairs: Vec<(&Track, &Option<BeatGrid>)> = tracks.iter().zip(grids).collect();
    par_map(&pairs, jobs, |(t, grid)| {
        let segments = match grid {
            Some(g) => match segment_bars(&t.audio, g, BARS_PER_SEGMENT) {
                Ok(set) => Some(
                    set.segments
                        .iter()
                        .enumerate()
                        .map(|(i, s)| extractor.extract(s, &format!("{}#{i}", t.key)))
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                Err(_) => None,
            },
            None => None,
        };
        Ok(TrackFeatures {
            key: t.key.clone(),
            label: t.label,
            split: t.split,
            segments,
        })
    })
    .into_iter()
    .collect()
}

/// Every segment of the tracks in `split`, labelled by its track.
pub fn build_stage1_set(feats: &[TrackFeatures], split: Split) -> FeatureSet {
    let mut set = FeatureSet::default();
    for t in feats.iter().filter(|t| t.split == split) {
        for f in t.segments.iter().flatten() {
            set.push(f.clone(), t.label);
        }
    }
    set
}

/// Stage-1 pooled vectors of a track's segments, padded or cropped.
pub fn sequence_from_features<D: Detector>(
    stage1: &D,
    segments: &[Features],
    key: &str,
    max_len: usize,
) -> Result<EmbeddingSequence, TrainError> {
    let mut rows = Vec::with_capacity(segments.len());
    for f in segments {
        rows.push(stage1.forward(&stage1.input_from(f.clone())?)?.pooled);
    }
    let d = rows.first().map_or(0, Vec::len);
    let sources = (0..rows.len()).map(|i| format!("{key}#{i}")).collect();
    let vectors = Array2::from_shape_vec((rows.len(), d), rows.into_iter().flatten().collect()).expect("pooled dims");
    Ok(pad_or_crop(&EmbeddingSequence::new(vectors, sources), max_len))
}

/// One stage-2 sequence per segmentable track in `split`.
pub fn build_stage2_set<D: Detector + Sync>(
    stage1: &D,
    feats: &[TrackFeatures],
    split: Split,
    max_len: usize,
    jobs: usize,
) -> Result<FeatureSet, TrainError> {
    let chosen: Vec<&TrackFeatures> = feats.iter().filter(|t| t.split == split && t.segments.is_some()).collect();
    let seqs = par_map(&chosen, jobs, |t| {
        sequence_from_features(stage1, t.segments.as_deref().unwrap_or(&[]), &t.key, max_len)
    });
    let mut set = FeatureSet::default();
    for (t, s) in chosen.iter().zip(seqs) {
        set.push(Features::Sequence(s?), t.label);
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutcome {
    pub key: String,
    pub label: u8,
    /// `None` when the track could not be segmented (scored as 0.5).
    pub probability: Option<f64>,
}

/// Full-track scores for `split`; unsegmentable tracks score 0.5.
pub fn evaluate_tracks<D1: Detector + Sync>(
    stage1: &D1,
    stage2: &SegmentTransformer,
    feats: &[TrackFeatures],
    split: Split,
    jobs: usize,
) -> Result<(Vec<TrackOutcome>, EvalReport), TrainError> {
    let chosen: Vec<&TrackFeatures> = feats.iter().filter(|t| t.split == split).collect();
    if chosen.is_empty() {
        return Err(TrainError::EmptySplit(split.to_string()));
    }
    let outcomes = par_map(&chosen, jobs, |t| -> Result<TrackOutcome, TrainError> {
        let probability = match &t.segments {
            Some(segs) => {
                let seq = sequence_from_features(stage1, segs, &t.key, stage2.cfg.max_seq)?;
                Some(stage2.forward(&seq)?.probability)
            }
            None => None,
        };
        Ok(TrackOutcome {
            key: t.key.clone(),
            label: t.label,
            probability,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let scores: Vec<f64> = outcomes.iter().map(|o| o.probability.unwrap_or(0.5)).collect();
    let labels: Vec<u8> = outcomes.iter().map(|o| o.label).collect();
    let report = EvalReport::from_scores(&scores, &labels, 0.5)?;
    Ok((outcomes, report))
}

#[derive(Debug, Clone)]
pub struct TwoStageConfig {
    pub extractor: String,
    pub attn: AttentionConfig,
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    /// Seeds model initialization; training order comes from the train configs.
    pub seed: u64,
    pub jobs: usize,
}

impl Default for TwoStageConfig {
    fn default() -> Self {
        Self {
            extractor: "win-128".into(),
            attn: AttentionConfig::new(128, 4, 256),
            stage1: TrainConfig::preset("paper-s1-bce").expect("preset"),
            stage2: TrainConfig::preset("paper-s2").expect("preset"),
            seed: 0,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoStageResult {
    pub stage1: AudioCat,
    pub stage2: SegmentTransformer,
    pub stage1_history: History,
    pub stage2_history: History,
    pub stage1_test: EvalReport,
    pub outcomes: Vec<TrackOutcome>,
    pub report: EvalReport,
    /// Tracks the beat pipeline could not segment.
    pub unsegmented: usize,
}

/// Stage-1 AudioCAT on segment features, then the segment transformer on
/// pooled-vector sequences; scores the test split.
pub fn run_two_stage(tracks: &[Track], cfg: &TwoStageConfig) -> Result<TwoStageResult, TrainError> {
    let extractor = extractor_preset(&cfg.extractor)?;
    let grids = analyze_tracks(tracks, cfg.jobs);
    let unsegmented = grids.iter().filter(|g| g.is_none()).count();
    let feats = featurize_tracks(tracks, &grids, extractor.as_ref(), cfg.jobs)?;

    let mut s1_cfg = AudioCatConfig::new(extractor.dim());
    s1_cfg.attn = cfg.attn;
    let mut stage1 = AudioCat::new(s1_cfg, cfg.seed)?;
    let s1_train = build_stage1_set(&feats, Split::Train);
    let s1_val = build_stage1_set(&feats, Split::Val);
    let s1 = train(&mut stage1, &s1_train, &s1_val, &cfg.stage1)?;
    let s1_test_set = build_stage1_set(&feats, Split::Test);
    let stage1_test = if s1_test_set.is_empty() {
        super::metrics(Default::default())
    } else {
        evaluate(&stage1, &s1_test_set, cfg.stage1.loss)?.2
    };

    let max_seq = cfg.stage2.max_seq;
    let s2_train = build_stage2_set(&stage1, &feats, Split::Train, max_seq, cfg.jobs)?;
    let s2_val = build_stage2_set(&stage1, &feats, Split::Val, max_seq, cfg.jobs)?;
    let mut s2_cfg = SegTrConfig::new(cfg.attn.model_dim);
    s2_cfg.attn = cfg.attn;
    s2_cfg.max_seq = max_seq;
    let mut stage2 = SegmentTransformer::new(s2_cfg, cfg.seed.wrapping_add(100))?;
    let s2 = train(&mut stage2, &s2_train, &s2_val, &cfg.stage2)?;
    let (outcomes, report) = evaluate_tracks(&stage1, &stage2, &feats, Split::Test, cfg.jobs)?;
    Ok(TwoStageResult {
        stage1,
        stage2,
        stage1_history: s1.history,
        stage2_history: s2.history,
        stage1_test,
        outcomes,
        report,
        unsegmented,
    })
}
