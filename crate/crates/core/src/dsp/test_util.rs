use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) fn sine(freq: f64, rate: u32, n: usize, amp: f64) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (std::f64::consts::TAU * freq * i as f64 / rate as f64).sin())
        .collect()
}

/// Frequency of the largest whole-signal DFT bin, and the bin spacing.
pub(crate) fn peak_frequency(x: &[f64], rate: u32) -> (f64, f64) {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (k, _) = buf[..n / 2]
        .iter()
        .enumerate()
        .fold((0, 0.0), |a, (i, c)| if c.norm() > a.1 { (i, c.norm()) } else { a });
    let df = rate as f64 / n as f64;
    (k as f64 * df, df)
}
