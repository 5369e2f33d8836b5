//! Autocorrelation pitch tracking.
//!
//! Frames follow the feature framing (25 ms window, 10 ms hop) so frame `t`
//! is centred at `t·hop + window/2`; the analysis itself uses a longer
//! segment around that centre so the lowest pitch still spans a full period.
//! Each frame's normalized cross-correlation (NCCF) is computed with an FFT;
//! the voicing decision thresholds the NCCF peak and frame energy.

use crate::audio::Waveform;
use crate::dsp::{frame_count, Spectrum};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub analysis_ms: f64,
    pub min_f0: f64,
    pub max_f0: f64,
    /// Minimum NCCF peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Frames quieter than this (dB, relative to the loudest frame) are unvoiced.
    pub silence_db: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            analysis_ms: 30.0,
            min_f0: 50.0,
            max_f0: 500.0,
            voicing_threshold: 0.5,
            silence_db: -40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchFrame {
    /// Hz; 0 for unvoiced frames.
    pub f0: f64,
    /// NCCF peak in `[0, 1]`.
    pub periodicity: f64,
    /// Mean square of the analysis window.
    pub energy: f64,
}

impl PitchFrame {
    pub fn voiced(&self) -> bool {
        self.f0 > 0.0
    }
}

/// F0 contour in Hz per 10 ms frame, 0 marking unvoiced frames.
pub fn estimate_f0(wave: &Waveform) -> Result<Vec<f64>> {
    Ok(track(wave, &PitchConfig::default())?.into_iter().map(|f| f.f0).collect())
}

pub fn track(wave: &Waveform, cfg: &PitchConfig) -> Result<Vec<PitchFrame>> {
    if wave.is_empty() {
        return Err(Error::invalid("empty audio"));
    }
    let sr = wave.rate() as f64;
    let x = wave.to_f64();
    let win = (cfg.frame_ms * sr / 1000.0).round() as usize;
    let hop = (cfg.hop_ms * sr / 1000.0).round() as usize;
    let n_frames = frame_count(x.len(), win, hop);
    let w = (cfg.analysis_ms * sr / 1000.0).round() as usize;
    let min_lag = ((sr / cfg.max_f0).floor() as usize).max(2);
    let max_lag = (sr / cfg.min_f0).ceil() as usize;
    let seg_len = w + max_lag + 1;
    let nfft = (2 * seg_len).next_power_of_two();
    let spec = Spectrum::new(nfft);

    let mut frames = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let center = (t * hop + win / 2) as isize;
        let start = center - (seg_len / 2) as isize;
        let seg: Vec<f64> = (0..seg_len)
            .map(|i| {
                let j = start + i as isize;
                if j >= 0 && (j as usize) < x.len() {
                    x[j as usize]
                } else {
                    0.0
                }
            })
            .collect();
        frames.push(analyse_segment(&seg, w, min_lag, max_lag, &spec, sr));
    }

    let loudest = frames.iter().map(|f| f.energy).fold(0.0, f64::max);
    let floor = (loudest * 10f64.powf(cfg.silence_db / 10.0)).max(1e-12);
    for f in &mut frames {
        if f.energy < floor || f.periodicity < cfg.voicing_threshold {
            f.f0 = 0.0;
        }
    }
    Ok(frames)
}

fn analyse_segment(seg: &[f64], w: usize, min_lag: usize, max_lag: usize, spec: &Spectrum, sr: f64) -> PitchFrame {
    let energy = seg[..w].iter().map(|v| v * v).sum::<f64>();
    let unvoiced = PitchFrame { f0: 0.0, periodicity: 0.0, energy: energy / w as f64 };
    if energy <= 1e-12 {
        return unvoiced;
    }
    // r(τ) = Σ_{i<w} y_i x_{i+τ} with y = first w samples of x.
    let xs = spec.forward(seg);
    let ys = spec.forward(&seg[..w]);
    let cross: Vec<_> = xs.iter().zip(&ys).map(|(a, b)| a * b.conj()).collect();
    let r = spec.inverse_real(cross);

    let mut prefix = vec![0.0; seg.len() + 1];
    for (i, v) in seg.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v * v;
    }
    let nccf = |tau: usize| -> f64 {
        let e_tau = prefix[tau + w] - prefix[tau];
        let den = (energy * e_tau).sqrt();
        if den <= 1e-12 {
            0.0
        } else {
            r[tau] / den
        }
    };
    let lo = min_lag.saturating_sub(1).max(1);
    let vals: Vec<f64> = (lo..=max_lag + 1).map(nccf).collect();
    let at = |tau: usize| vals[tau - lo];

    let mut best = (min_lag, f64::NEG_INFINITY);
    for tau in min_lag..=max_lag {
        if at(tau) > best.1 {
            best = (tau, at(tau));
        }
    }
    if best.1 <= 0.0 {
        return unvoiced;
    }
    // Prefer the shortest lag whose peak is close to the best one; longer lags
    // at multiples of the period score almost as high.
    let mut chosen = best.0;
    for tau in min_lag..=max_lag {
        let v = at(tau);
        if v >= 0.9 * best.1 && v >= at(tau - 1) && v >= at(tau + 1) {
            chosen = tau;
            break;
        }
    }
    let (a, b, c) = (at(chosen - 1), at(chosen), at(chosen + 1));
    let den = a - 2.0 * b + c;
    let delta = if den.abs() > 1e-12 { (0.5 * (a - c) / den).clamp(-0.5, 0.5) } else { 0.0 };
    let lag = chosen as f64 + delta;
    PitchFrame { f0: sr / lag, periodicity: b.clamp(0.0, 1.0), energy: energy / w as f64 }
}
