//! Framing, spectra, mel filterbanks and cepstral transforms shared by the
//! feature extractors and the source-filter vocoder.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Number of complete frames of length `window` at step `hop`.
pub fn frame_count(n: usize, window: usize, hop: usize) -> usize {
    if n < window || window == 0 {
        0
    } else {
        (n - window) / hop + 1
    }
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect()
}

/// Periodic Hann window; overlapping copies at `n/2` hop sum to one.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over `nfft/2 + 1` bins.
#[derive(Debug, Clone)]
pub struct MelBank {
    pub filters: Vec<Vec<f64>>,
    pub centers_hz: Vec<f64>,
    pub bins: usize,
}

impl MelBank {
    pub fn new(n_mels: usize, nfft: usize, rate: u32, fmin: f64, fmax: f64) -> Self {
        let bins = nfft / 2 + 1;
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let points: Vec<f64> =
            (0..n_mels + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64)).collect();
        let bin_hz = rate as f64 / nfft as f64;
        let mut filters = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (l, c, r) = (points[m], points[m + 1], points[m + 2]);
            let f = (0..bins)
                .map(|k| {
                    let hz = k as f64 * bin_hz;
                    if hz <= l || hz >= r {
                        0.0
                    } else if hz <= c {
                        (hz - l) / (c - l)
                    } else {
                        (r - hz) / (r - c)
                    }
                })
                .collect();
            filters.push(f);
        }
        Self { filters, centers_hz: points[1..=n_mels].to_vec(), bins }
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.filters.iter().map(|f| f.iter().zip(power).map(|(w, p)| w * p).sum()).collect()
    }

    /// Sum of each filter's weights (its effective width in bins).
    pub fn widths(&self) -> Vec<f64> {
        self.filters.iter().map(|f| f.iter().sum::<f64>().max(1e-12)).collect()
    }
}

/// Orthonormal DCT-II rows `0..n_out` for inputs of length `n_in`.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n_in as f64).sqrt() } else { (2.0 / n_in as f64).sqrt() };
            (0..n_in).map(|n| scale * (PI * k as f64 * (n as f64 + 0.5) / n_in as f64).cos()).collect()
        })
        .collect()
}

pub fn dct(dct: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    dct.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Inverse of a truncated orthonormal DCT-II: reconstructs `n_in` values from
/// the leading cepstra (missing high-order coefficients are taken as zero).
pub fn idct(dct: &[Vec<f64>], cepstra: &[f64]) -> Vec<f64> {
    let n_in = dct.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n_in];
    for (row, c) in dct.iter().zip(cepstra) {
        for (o, w) in out.iter_mut().zip(row) {
            *o += w * c;
        }
    }
    out
}

/// Real-input FFT helper holding a planned transform of fixed size.
#[derive(Clone)]
pub struct Spectrum {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectrum {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Complex spectrum of `x` zero-padded to the transform size.
    pub fn forward(&self, x: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = (0..self.n).map(|i| Complex::new(x.get(i).copied().unwrap_or(0.0), 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Real part of the inverse transform, scaled by `1/n`.
    pub fn inverse_real(&self, mut spec: Vec<Complex<f64>>) -> Vec<f64> {
        self.inv.process(&mut spec);
        let k = 1.0 / self.n as f64;
        spec.into_iter().map(|c| c.re * k).collect()
    }

    /// Power spectrum over `n/2 + 1` bins.
    pub fn power(&self, x: &[f64]) -> Vec<f64> {
        let spec = self.forward(x);
        spec[..self.n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(x), mean(y));
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if den <= 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_formula() {
        assert_eq!(frame_count(16_000, 400, 160), 98);
        assert_eq!(frame_count(399, 400, 160), 0);
        assert_eq!(frame_count(400, 400, 160), 1);
    }

    #[test]
    fn full_dct_inverts() {
        let d = dct_matrix(8, 8);
        let x: Vec<f64> = (0..8).map(|i| (i as f64).cos() * 3.0).collect();
        let back = idct(&d, &dct(&d, &x));
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hann_overlap_adds_to_one() {
        let w = hann_periodic(8);
        for i in 0..4 {
            assert!((w[i] + w[i + 4] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mel_round_trip() {
        for f in [0.0, 440.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn stats_helpers() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert!((std_dev(&[1.0, 2.0, 3.0]) - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
    }
}
