use aigm_core::audio::write_wav;
use aigm_core::train::{render_track, SynthSpec, TrackPlan};
use aigm_demo::Track;

fn wav_bytes(label: u8, bpm: f64, seconds: f64) -> Vec<u8> {
    let plan = TrackPlan {
        label,
        bpm,
        lead_in_s: 0.2,
        seed: 3,
    };
    let spec = SynthSpec {
        duration_s: seconds,
        ..SynthSpec::default()
    };
    let mut out = Vec::new();
    write_wav(&render_track(&plan, &spec), &mut out).unwrap();
    out
}

#[test]
fn decoded_track_gets_a_bar_grid() {
    let t = Track::decode(&wav_bytes(0, 110.0, 40.0)).unwrap();
    let b = t.beat_grid().unwrap();
    assert!((b.bpm() - 110.0).abs() < 2.0, "{}", b.bpm());
    let bars = b.bars();
    assert_eq!(bars.len() % 2, 0);
    assert!(bars.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(b.segments(), bars.len() / 2 / 4);
}

#[test]
fn ssm_is_square_with_white_diagonal() {
    let t = Track::synth(true, 120.0, 48.0, 2);
    let map = t.segment_ssm().unwrap();
    assert_eq!(map.width(), map.height());
    assert!(map.width() >= 4);
    let px = map.pixels();
    for i in 0..map.width() {
        assert_eq!(px[i * map.width() + i], 255);
        for j in 0..map.width() {
            assert_eq!(px[i * map.width() + j], px[j * map.width() + i]);
        }
    }
}

#[test]
fn mel_image_dimensions() {
    let t = Track::synth(false, 100.0, 10.0, 4);
    let map = t.mel_image(48).unwrap();
    assert_eq!(map.height(), 48);
    assert_eq!(map.pixels().len(), map.width() * map.height());
    assert!(map.pixels().contains(&255));
}

#[test]
fn garbage_is_rejected() {
    assert!(Track::decode(b"RIFF....WAVEjunk").is_err());
}
