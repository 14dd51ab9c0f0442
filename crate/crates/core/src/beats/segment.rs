use super::{BeatError, BeatGrid};
use crate::audio::AudioBuffer;

pub const BARS_PER_SEGMENT: usize = 4;
/// A final segment missing at most this much audio is kept, cut at the track end.
pub const TAIL_TOLERANCE_S: f64 = 0.05;

/// Consecutive, abutting multi-bar slices of a track.
#[derive(Debug, Clone)]
pub struct SegmentSet {
    pub segments: Vec<AudioBuffer>,
    pub boundaries: Vec<(f64, f64)>,
    pub bars_per_segment: usize,
}

impl SegmentSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Number of `bars`-bar windows from `grid.start` that fit in `duration_s`,
/// allowing the last one to overrun the end by `TAIL_TOLERANCE_S`.
pub fn segment_count(duration_s: f64, grid: &BeatGrid, bars: usize) -> usize {
    let span = bars as f64 * grid.period;
    if duration_s <= grid.start {
        return 0;
    }
    ((duration_s - grid.start + TAIL_TOLERANCE_S) / span + 1e-9).floor() as usize
}

/// Cuts non-overlapping `bars_per_segment`-bar windows starting at the grid
/// origin; an incomplete tail is dropped (see `segment_count`).
pub fn segment_bars(
    track: &AudioBuffer,
    grid: &BeatGrid,
    bars_per_segment: usize,
) -> Result<SegmentSet, BeatError> {
    if bars_per_segment == 0 {
        return Err(BeatError::GridTooSparse("zero bars per segment".into()));
    }
    let k = segment_count(track.duration_s(), grid, bars_per_segment);
    if k == 0 {
        return Err(BeatError::GridTooSparse(format!(
            "{:.2} s track holds no {bars_per_segment}-bar unit of {:.3} s bars",
            track.duration_s(),
            grid.period
        )));
    }
    let span = bars_per_segment as f64 * grid.period;
    let rate = track.sample_rate() as f64;
    let edge = |i: usize| grid.start + i as f64 * span;
    let sample = |t: f64| ((t * rate).round() as usize).min(track.frames());
    let boundaries: Vec<(f64, f64)> = (0..k).map(|i| (edge(i), edge(i + 1))).collect();
    let segments = boundaries
        .iter()
        .map(|&(s, e)| track.slice_frames(sample(s), sample(e)))
        .collect();
    Ok(SegmentSet {
        segments,
        boundaries,
        bars_per_segment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(secs: f64) -> AudioBuffer {
        AudioBuffer::silence(1, (secs * 16000.0) as usize, 16000).unwrap()
    }

    #[test]
    fn counts_follow_floor_rule() {
        let g = BeatGrid::new(0.0, 2.0, 32).unwrap();
        let s = segment_bars(&track(64.0), &g, 4).unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.segments.iter().all(|x| x.frames() == 8 * 16000));
        assert_eq!(segment_bars(&track(63.0), &g, 4).unwrap().len(), 7);
    }

    #[test]
    fn slightly_late_grid_keeps_last_segment() {
        let g = BeatGrid::new(0.008, 2.0, 32).unwrap();
        let s = segment_bars(&track(64.0), &g, 4).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s.segments[7].frames(), 64 * 16000 - (56.008f64 * 16000.0).round() as usize);
        let g = BeatGrid::new(0.06, 2.0, 32).unwrap();
        assert_eq!(segment_bars(&track(64.0), &g, 4).unwrap().len(), 7);
    }

    #[test]
    fn offset_grid() {
        let g = BeatGrid::new(1.0, 2.0, 32).unwrap();
        let s = segment_bars(&track(65.0), &g, 4).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s.boundaries[0], (1.0, 9.0));
        assert_eq!(s.boundaries[1], (9.0, 17.0));
    }

    #[test]
    fn boundaries_partition_the_span() {
        let g = BeatGrid::new(0.37, 1.913, 10).unwrap();
        let s = segment_bars(&track(70.0), &g, 4).unwrap();
        assert_eq!(s.boundaries[0].0, 0.37);
        for w in s.boundaries.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        let total: usize = s.segments.iter().map(AudioBuffer::frames).sum();
        let expect = ((s.boundaries.last().unwrap().1 * 16000.0).round()
            - (0.37f64 * 16000.0).round()) as usize;
        assert_eq!(total, expect);
    }

    #[test]
    fn too_short_track() {
        let g = BeatGrid::new(0.0, 2.0, 4).unwrap();
        assert!(matches!(segment_bars(&track(6.0), &g, 4), Err(BeatError::GridTooSparse(_))));
    }
}
