use aigm_core::audio::{read_wav, write_wav, AudioBuffer};
use aigm_core::beats::{analyze_track, segment_bars, BARS_PER_SEGMENT};
use aigm_core::detect::{
    extractor_preset, load_detector, self_similarity, track_to_sequence, AnyDetector, AudioCat, AudioCatConfig,
    Detector, SegTrConfig, SegmentTransformer,
};
use aigm_core::nn::{save_checkpoint, AttentionConfig};
use aigm_core::train::{synth_dataset, SynthSpec};

fn tiny_attn() -> AttentionConfig {
    AttentionConfig::new(8, 2, 16)
}

fn synth_track(dir: &std::path::Path, seconds: f64) -> AudioBuffer {
    let spec = SynthSpec {
        duration_s: seconds,
        ..SynthSpec::default()
    };
    let m = synth_dataset(4, dir, 11, &spec).unwrap();
    aigm_core::audio::load_wav(&m.entries[0].path).unwrap()
}

#[test]
fn wav_bytes_survive_analysis_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let track = synth_track(dir.path(), 24.0);
    let mut bytes = Vec::new();
    write_wav(&track, &mut bytes).unwrap();
    let again = read_wav(&bytes).unwrap();
    let a = analyze_track(&track).unwrap();
    let b = analyze_track(&again).unwrap();
    assert_eq!(a.beats, b.beats);
    assert_eq!(a.grid, b.grid);
}

#[test]
fn segments_tile_the_bar_grid() {
    let dir = tempfile::tempdir().unwrap();
    let track = synth_track(dir.path(), 32.0);
    let a = analyze_track(&track).unwrap();
    let segs = segment_bars(&track, &a.grid, BARS_PER_SEGMENT).unwrap();
    assert!(!segs.is_empty());
    let span = a.grid.period * BARS_PER_SEGMENT as f64;
    for s in &segs.segments {
        let secs = s.duration_s();
        assert!(secs <= span + 1.0 / 16_000.0 && secs > span - 0.06, "{secs} vs {span}");
    }
}

#[test]
fn two_stage_forward_and_checkpoint_reload() {
    let dir = tempfile::tempdir().unwrap();
    let track = synth_track(dir.path(), 24.0);
    let grid = analyze_track(&track).unwrap().grid;
    let extractor = extractor_preset("win-128").unwrap();
    let mut cfg = AudioCatConfig::new(extractor.dim());
    cfg.attn = tiny_attn();
    let stage1 = AnyDetector::AudioCat(AudioCat::new(cfg, 5).unwrap());
    let seq = track_to_sequence(&track, &grid, &stage1, extractor.as_ref(), "t", 16).unwrap();
    assert_eq!(seq.len(), 16);
    assert!(seq.valid_count() >= 2);

    let ssm = self_similarity(&seq);
    for i in 0..seq.valid_count() {
        assert!((ssm.matrix[[i, i]] - 1.0).abs() < 1e-12);
    }

    let mut s2 = SegTrConfig::new(8);
    s2.attn = tiny_attn();
    s2.max_seq = 16;
    let stage2 = SegmentTransformer::new(s2, 6).unwrap();
    let p = stage2.forward(&seq).unwrap().probability;
    assert!(p > 0.0 && p < 1.0);

    let path = dir.path().join("s2.ckpt");
    save_checkpoint(&path, stage2.params(), &stage2.meta()).unwrap();
    let (reloaded, _) = load_detector(&path).unwrap();
    let AnyDetector::SegTr(reloaded) = reloaded else {
        panic!("wrong architecture");
    };
    assert_eq!(reloaded.forward(&seq).unwrap().probability, p);
}
