//! Deterministic source-filter vocoder.
//!
//! Excitation is a pulse train at the frame F0 (voiced) or white noise
//! (unvoiced). Each 10 ms frame's excitation is windowed (Hann, two hops
//! long), shaped by the magnitude envelope recovered from its 13 cepstra
//! and overlap-added. The envelope comes from the inverse DCT of the
//! cepstra (log mel energies), divided by each filter's width and
//! interpolated across FFT bins on the mel scale.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;

use super::acoustic::AcousticFrames;
use crate::audio::{Waveform, DEFAULT_RATE};
use crate::corpus::mfcc::{MfccAnalyzer, MfccConfig};
use crate::dsp::{hann_periodic, hz_to_mel, Spectrum};
use crate::error::{Error, Result};

#[derive(Clone)]
pub struct DspVocoder {
    pub rate: u32,
    pub hop: usize,
    /// Seed of the unvoiced noise source.
    pub seed: u64,
    analyzer: MfccAnalyzer,
    spectrum: Spectrum,
    window: Vec<f64>,
    /// For each FFT bin: lower mel band and interpolation weight.
    bin_map: Vec<(usize, f64)>,
    log_widths: Vec<f64>,
    /// Σ w² of the analysis window, relating densities to frame power.
    window_power: f64,
}

impl std::fmt::Debug for DspVocoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DspVocoder").field("rate", &self.rate).field("hop", &self.hop).field("seed", &self.seed).finish()
    }
}

impl Default for DspVocoder {
    fn default() -> Self {
        Self::new(DEFAULT_RATE, 0)
    }
}

impl DspVocoder {
    pub fn new(rate: u32, seed: u64) -> Self {
        let cfg = MfccConfig::default();
        let analyzer = MfccAnalyzer::new(cfg, rate);
        let nfft = cfg.nfft(rate);
        let hop = cfg.hop(rate);
        let centers: Vec<f64> = analyzer.mel.centers_hz.iter().map(|&c| hz_to_mel(c)).collect();
        let last = centers.len() - 1;
        let bin_map = (0..nfft / 2 + 1)
            .map(|k| {
                let m = hz_to_mel(k as f64 * rate as f64 / nfft as f64);
                if m <= centers[0] {
                    (0, 0.0)
                } else if m >= centers[last] {
                    (last - 1, 1.0)
                } else {
                    let i = centers.windows(2).position(|w| m < w[1]).unwrap_or(last - 1);
                    (i, (m - centers[i]) / (centers[i + 1] - centers[i]))
                }
            })
            .collect();
        let log_widths = analyzer.mel.widths().iter().map(|w| w.ln()).collect();
        let window_power = analyzer.window.iter().map(|w| w * w).sum();
        Self {
            rate,
            hop,
            seed,
            spectrum: Spectrum::new(nfft),
            window: hann_periodic(2 * hop),
            bin_map,
            log_widths,
            window_power,
            analyzer,
        }
    }

    /// Linear magnitude envelope over `nfft/2 + 1` bins.
    pub fn envelope(&self, ceps: &[f64]) -> Vec<f64> {
        let log_mel = self.analyzer.log_mel_from_cepstra(ceps);
        let density: Vec<f64> = log_mel.iter().zip(&self.log_widths).map(|(e, w)| e - w).collect();
        self.bin_map
            .iter()
            .map(|&(i, a)| {
                let ld = density[i] + a * (density[i + 1] - density[i]);
                (ld.exp() / self.window_power).sqrt()
            })
            .collect()
    }

    /// Pulse train (unit mean power) where `f0 > 0`, unit white noise elsewhere.
    fn excitation(&self, f0: &[f64]) -> Vec<f64> {
        let sr = self.rate as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = vec![0.0; f0.len() * self.hop];
        let mut phase = 0.0;
        for (t, &f) in f0.iter().enumerate() {
            for y in &mut out[t * self.hop..(t + 1) * self.hop] {
                let noise: f64 = StandardNormal.sample(&mut rng);
                if f > 0.0 {
                    phase += f / sr;
                    if phase >= 1.0 {
                        phase -= 1.0;
                        *y = (sr / f).sqrt();
                    }
                } else {
                    phase = 0.0;
                    *y = noise;
                }
            }
        }
        out
    }

    pub fn vocode(&self, frames: &AcousticFrames, f0: &[f64]) -> Result<Waveform> {
        let t_len = frames.frames();
        if f0.len() != t_len {
            return Err(Error::Shape(format!("{} F0 values for {t_len} frames", f0.len())));
        }
        if t_len == 0 {
            return Err(Error::invalid("no frames to vocode"));
        }
        let exc = self.excitation(f0);
        let n = exc.len();
        let nfft = self.spectrum.size();
        let seg = 2 * self.hop;
        let pad = (nfft - seg) / 2;
        let mut out = vec![0.0; n];
        for t in 0..t_len {
            let start = (t * self.hop) as isize - (self.hop / 2) as isize;
            let mut buf = vec![0.0; nfft];
            for i in 0..seg {
                let j = start + i as isize;
                if j >= 0 && (j as usize) < n {
                    buf[pad + i] = exc[j as usize] * self.window[i];
                }
            }
            let env = self.envelope(frames.mfcc.row(t));
            let mut spec = self.spectrum.forward(&buf);
            for (k, c) in spec.iter_mut().enumerate() {
                let bin = if k <= nfft / 2 { k } else { nfft - k };
                *c *= Complex::new(env[bin], 0.0);
            }
            let y = self.spectrum.inverse_real(spec);
            let base = start - pad as isize;
            for (i, v) in y.iter().enumerate() {
                let j = base + i as isize;
                if j >= 0 && (j as usize) < n {
                    out[j as usize] += v;
                }
            }
        }
        Ok(Waveform::from_f64(&out, self.rate))
    }
}

/// Vocodes at 24 kHz with the default noise seed.
pub fn vocode_dsp(frames: &AcousticFrames, f0: &[f64]) -> Result<Waveform> {
    DspVocoder::default().vocode(frames, f0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mat;
    use crate::pitch::estimate_f0;

    fn flat(frames: usize, c0: f64) -> AcousticFrames {
        let mut m = Mat::zeros(frames, 13);
        for r in 0..frames {
            m.set(r, 0, c0);
        }
        AcousticFrames::new(m).unwrap()
    }

    #[test]
    fn constant_pitch_round_trip() {
        let w = vocode_dsp(&flat(100, 0.0), &[110.0; 100]).unwrap();
        assert!((w.len() as i64 - 24_000).abs() <= 240);
        let f0 = estimate_f0(&w).unwrap();
        let voiced: Vec<f64> = f0.into_iter().filter(|&v| v > 0.0).collect();
        assert!(voiced.len() > 80);
        let mean = voiced.iter().sum::<f64>() / voiced.len() as f64;
        assert!((mean - 110.0).abs() < 5.5, "mean {mean}");
    }

    #[test]
    fn unvoiced_contour_is_noise_like() {
        let w = vocode_dsp(&flat(100, 0.0), &[0.0; 100]).unwrap();
        let f0 = estimate_f0(&w).unwrap();
        let ratio = f0.iter().filter(|&&v| v > 0.0).count() as f64 / f0.len() as f64;
        assert!(ratio < 0.2, "voiced ratio {ratio}");
    }

    #[test]
    fn envelope_follows_c0() {
        let v = DspVocoder::default();
        let lo = v.envelope(&[0.0; 13]);
        let hi = v.envelope(&[10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(lo.iter().zip(&hi).all(|(a, b)| b > a));
    }

    #[test]
    fn deterministic_and_bounded() {
        let f0: Vec<f64> = (0..50).map(|t| if t % 10 < 6 { 150.0 } else { 0.0 }).collect();
        let a = vocode_dsp(&flat(50, 30.0), &f0).unwrap();
        let b = vocode_dsp(&flat(50, 30.0), &f0).unwrap();
        assert_eq!(a.to_wav_bytes().unwrap(), b.to_wav_bytes().unwrap());
        assert!(a.samples().iter().all(|s| (-1.0..=1.0).contains(s)));
        assert!(vocode_dsp(&flat(50, 0.0), &f0[..49]).is_err());
    }
}
