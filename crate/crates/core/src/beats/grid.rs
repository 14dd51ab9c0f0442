use super::BeatError;

/// Beats per bar.
pub const METER: usize = 4;

/// Exactly periodic downbeat grid: downbeat `i` sits at `start + i * period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatGrid {
    pub start: f64,
    /// One bar, downbeat to downbeat, in seconds.
    pub period: f64,
    pub count: usize,
    pub meter: usize,
    /// RMS distance between the detected downbeats and the fitted grid.
    pub residual_rms: f64,
}

impl BeatGrid {
    pub fn new(start: f64, period: f64, count: usize) -> Result<Self, BeatError> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(BeatError::DegenerateFit(period));
        }
        if start < 0.0 || count < 2 {
            return Err(BeatError::GridTooSparse(format!("start {start}, count {count}")));
        }
        Ok(Self {
            start,
            period,
            count,
            meter: METER,
            residual_rms: 0.0,
        })
    }

    pub fn downbeat(&self, i: usize) -> f64 {
        self.start + i as f64 * self.period
    }

    pub fn downbeats(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.downbeat(i)).collect()
    }

    pub fn bpm(&self) -> f64 {
        60.0 * self.meter as f64 / self.period
    }

    /// `(start, end)` of every bar between consecutive grid downbeats.
    pub fn bars(&self) -> Vec<(f64, f64)> {
        (0..self.count - 1)
            .map(|i| (self.downbeat(i), self.downbeat(i + 1)))
            .collect()
    }
}

/// Least-squares fit `d_i ~ start + i * period` over the detected downbeats.
///
/// A start that lands before zero is pulled to zero when within 50 ms,
/// otherwise advanced by whole bars (dropping the leading downbeats).
pub fn quantize_grid(downbeats: &[f64]) -> Result<BeatGrid, BeatError> {
    let n = downbeats.len();
    if n < 2 {
        return Err(BeatError::GridTooSparse(format!("{n} downbeats, need 2")));
    }
    let nf = n as f64;
    let mean_i = (nf - 1.0) / 2.0;
    let mean_d = downbeats.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, d) in downbeats.iter().enumerate() {
        let di = i as f64 - mean_i;
        sxy += di * (d - mean_d);
        sxx += di * di;
    }
    let period = sxy / sxx;
    if !(period > 0.0) || !period.is_finite() {
        return Err(BeatError::DegenerateFit(period));
    }
    let mut start = mean_d - period * mean_i;
    let residual_rms = (downbeats
        .iter()
        .enumerate()
        .map(|(i, d)| (d - start - i as f64 * period).powi(2))
        .sum::<f64>()
        / nf)
        .sqrt();

    let mut count = n;
    if start < 0.0 && start > -0.05 {
        start = 0.0;
    }
    while start < 0.0 {
        start += period;
        count -= 1;
    }
    if count < 2 {
        return Err(BeatError::GridTooSparse("fit starts before the audio".into()));
    }
    let mut grid = BeatGrid::new(start, period, count)?;
    grid.residual_rms = residual_rms;
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_grid() {
        let g = quantize_grid(&[0.0, 2.0, 4.0, 6.0]).unwrap();
        assert_eq!((g.start, g.period, g.count), (0.0, 2.0, 4));
        assert_eq!(g.residual_rms, 0.0);
        let g = quantize_grid(&[0.0, 2.0]).unwrap();
        assert_eq!((g.start, g.period, g.count), (0.0, 2.0, 2));
    }

    #[test]
    fn noisy_grid_matches_normal_equations() {
        let d = [0.02, 2.01, 3.97, 6.03];
        // 2x2 normal equations [n, sum i; sum i, sum i^2] [a; b] = [sum d; sum i d], Cramer's rule
        let (n, si, sii) = (4.0, 6.0, 14.0);
        let sd: f64 = d.iter().sum();
        let sid: f64 = d.iter().enumerate().map(|(i, v)| i as f64 * v).sum();
        let det = n * sii - si * si;
        let a = (sd * sii - si * sid) / det;
        let b = (n * sid - si * sd) / det;
        let g = quantize_grid(&d).unwrap();
        assert!((g.start - a).abs() < 1e-12 && (g.period - b).abs() < 1e-12);
        assert!(g.start.abs() < 0.03 && (g.period - 2.0).abs() < 0.03);
        assert!(g.residual_rms > 0.0);
    }

    #[test]
    fn grid_is_arithmetic() {
        let g = quantize_grid(&[0.51, 2.49, 4.52, 6.48, 8.5]).unwrap();
        let d = g.downbeats();
        for w in d.windows(2) {
            assert!((w[1] - w[0] - g.period).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate() {
        assert!(matches!(quantize_grid(&[3.0, 1.0]), Err(BeatError::DegenerateFit(_))));
        assert!(matches!(quantize_grid(&[1.0]), Err(BeatError::GridTooSparse(_))));
    }
}
