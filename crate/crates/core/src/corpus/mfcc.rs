//! 39-dimensional MFCC features: 13 cepstra (C0 included) plus first and
//! second regression deltas.

use crate::audio::Waveform;
use crate::dsp::{dct, dct_matrix, frame_count, hamming, MelBank, Spectrum};
use crate::error::{Error, Result};
use crate::nn::Mat;

pub const N_CEPS: usize = 13;
pub const MFCC_DIM: usize = 3 * N_CEPS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfccConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub n_ceps: usize,
    /// Floor applied to mel energies before the log.
    pub energy_floor: f64,
    /// Half-width of the delta regression window.
    pub delta_width: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self { frame_ms: 25.0, hop_ms: 10.0, n_mels: 40, n_ceps: N_CEPS, energy_floor: 1e-10, delta_width: 2 }
    }
}

impl MfccConfig {
    pub fn window(&self, rate: u32) -> usize {
        (self.frame_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn hop(&self, rate: u32) -> usize {
        (self.hop_ms * rate as f64 / 1000.0).round() as usize
    }

    pub fn nfft(&self, rate: u32) -> usize {
        self.window(rate).next_power_of_two()
    }

    /// C0 of a frame whose mel energies all sit at the floor.
    pub fn silence_c0(&self) -> f64 {
        self.energy_floor.ln() * (self.n_mels as f64).sqrt()
    }
}

/// Analysis pieces for one sample rate.
#[derive(Clone)]
pub struct MfccAnalyzer {
    pub cfg: MfccConfig,
    pub rate: u32,
    pub window: Vec<f64>,
    pub mel: MelBank,
    pub dct: Vec<Vec<f64>>,
    spectrum: Spectrum,
}

impl MfccAnalyzer {
    pub fn new(cfg: MfccConfig, rate: u32) -> Self {
        let nfft = cfg.nfft(rate);
        Self {
            cfg,
            rate,
            window: hamming(cfg.window(rate)),
            mel: MelBank::new(cfg.n_mels, nfft, rate, 0.0, rate as f64 / 2.0),
            dct: dct_matrix(cfg.n_ceps, cfg.n_mels),
            spectrum: Spectrum::new(nfft),
        }
    }

    /// Static cepstra, one row per frame (`T×n_ceps`).
    pub fn cepstra(&self, wave: &Waveform) -> Result<Mat> {
        if wave.rate() != self.rate {
            return Err(Error::invalid(format!("analyzer rate {} != audio rate {}", self.rate, wave.rate())));
        }
        let win = self.window.len();
        let hop = self.cfg.hop(self.rate);
        let x = wave.to_f64();
        let n = frame_count(x.len(), win, hop);
        if n == 0 {
            return Err(Error::invalid(format!(
                "audio too short: {} samples, need at least {win}",
                x.len()
            )));
        }
        let mut out = Mat::zeros(n, self.cfg.n_ceps);
        let mut frame = vec![0.0; win];
        for t in 0..n {
            let s = t * hop;
            for (i, f) in frame.iter_mut().enumerate() {
                *f = x[s + i] * self.window[i];
            }
            let power = self.spectrum.power(&frame);
            let logmel: Vec<f64> =
                self.mel.apply(&power).into_iter().map(|e| e.max(self.cfg.energy_floor).ln()).collect();
            out.row_mut(t).copy_from_slice(&dct(&self.dct, &logmel));
        }
        Ok(out)
    }

    /// Log mel energies recovered from leading cepstra.
    pub fn log_mel_from_cepstra(&self, ceps: &[f64]) -> Vec<f64> {
        crate::dsp::idct(&self.dct, ceps)
    }
}

/// Regression deltas over `±width` frames with edge replication.
pub fn deltas(x: &Mat, width: usize) -> Mat {
    let (t_len, d) = (x.rows, x.cols);
    let denom: f64 = 2.0 * (1..=width).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Mat::zeros(t_len, d);
    if t_len == 0 {
        return out;
    }
    for t in 0..t_len {
        for n in 1..=width {
            let fwd = (t + n).min(t_len - 1);
            let back = t.saturating_sub(n);
            for c in 0..d {
                let v = out.get(t, c) + n as f64 * (x.get(fwd, c) - x.get(back, c)) / denom;
                out.set(t, c, v);
            }
        }
    }
    out
}

/// `T×39` MFCC matrix with default framing.
pub fn extract_mfcc(wave: &Waveform) -> Result<Mat> {
    extract_mfcc_with(&MfccAnalyzer::new(MfccConfig::default(), wave.rate()), wave)
}

pub fn extract_mfcc_with(analyzer: &MfccAnalyzer, wave: &Waveform) -> Result<Mat> {
    if wave.rate() < 16_000 {
        return Err(Error::invalid(format!("sample rate {} below 16 kHz", wave.rate())));
    }
    let c = analyzer.cepstra(wave)?;
    let d1 = deltas(&c, analyzer.cfg.delta_width);
    let d2 = deltas(&d1, analyzer.cfg.delta_width);
    let k = analyzer.cfg.n_ceps;
    let mut out = Mat::zeros(c.rows, 3 * k);
    for t in 0..c.rows {
        let row = out.row_mut(t);
        row[..k].copy_from_slice(c.row(t));
        row[k..2 * k].copy_from_slice(d1.row(t));
        row[2 * k..].copy_from_slice(d2.row(t));
    }
    Ok(out)
}
