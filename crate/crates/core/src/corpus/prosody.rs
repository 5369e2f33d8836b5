//! Utterance-level prosody statistics.
//!
//! A fixed 35-entry vector; [`PROSODY_NAMES`] lists the entries in order.
//! Pitch statistics cover voiced frames only and are zero when no frame is
//! voiced. Frames use the 25 ms / 10 ms feature framing.

use crate::audio::Waveform;
use crate::dsp::{self, frame_count, Spectrum};
use crate::error::{Error, Result};
use crate::pitch::{self, PitchConfig};

pub const PROSODY_DIM: usize = 35;

pub const PROSODY_NAMES: [&str; PROSODY_DIM] = [
    "f0_mean",
    "f0_std",
    "f0_min",
    "f0_max",
    "f0_range",
    "f0_median",
    "f0_slope",
    "log_energy_mean",
    "log_energy_std",
    "log_energy_min",
    "log_energy_max",
    "log_energy_range",
    "log_energy_slope",
    "voiced_ratio",
    "speaking_rate",
    "zcr_mean",
    "zcr_std",
    "energy_delta_mean",
    "energy_delta_std",
    "f0_delta_mean",
    "f0_delta_std",
    "spectral_centroid_mean",
    "spectral_centroid_std",
    "spectral_rolloff_mean",
    "spectral_rolloff_std",
    "rms_mean",
    "rms_std",
    "rms_max",
    "pause_ratio",
    "pause_count",
    "duration_s",
    "hnr_mean",
    "hnr_std",
    "voiced_segment_count",
    "voiced_segment_mean_s",
];

pub const F0_MEAN: usize = 0;
pub const F0_STD: usize = 1;
pub const VOICED_RATIO: usize = 13;
pub const SPEAKING_RATE: usize = 14;

/// Frames more than this far below the loudest frame count as pause.
const PAUSE_DB: f64 = -30.0;
/// A pause is at least this many consecutive quiet frames.
const MIN_PAUSE_FRAMES: usize = 5;
const ROLLOFF: f64 = 0.85;

/// Prosody vector without a transcript; speaking rate is counted against a
/// single token.
pub fn extract_prosody(wave: &Waveform) -> Result<Vec<f64>> {
    extract_prosody_with_tokens(wave, 1)
}

/// Computes the prosody vector. `token_count` is the number of words in the
/// transcript (speaking rate is voiced frames per token; 0 is treated as 1).
pub fn extract_prosody_with_tokens(wave: &Waveform, token_count: usize) -> Result<Vec<f64>> {
    if wave.is_empty() {
        return Err(Error::invalid("empty audio"));
    }
    let rate = wave.rate();
    let cfg = PitchConfig::default();
    let win = (cfg.frame_ms * rate as f64 / 1000.0).round() as usize;
    let hop = (cfg.hop_ms * rate as f64 / 1000.0).round() as usize;
    let x = wave.to_f64();
    let n = frame_count(x.len(), win, hop);
    if n == 0 {
        return Err(Error::invalid(format!("audio too short: {} samples, need at least {win}", x.len())));
    }
    let pitch = pitch::track(wave, &cfg)?;
    debug_assert_eq!(pitch.len(), n);

    let spectrum = Spectrum::new(win.next_power_of_two());
    let window = dsp::hamming(win);
    let bin_hz = rate as f64 / spectrum.size() as f64;
    let mut log_e = Vec::with_capacity(n);
    let mut rms = Vec::with_capacity(n);
    let mut zcr = Vec::with_capacity(n);
    let mut centroid = Vec::with_capacity(n);
    let mut rolloff = Vec::with_capacity(n);
    for t in 0..n {
        let frame = &x[t * hop..t * hop + win];
        let ms = frame.iter().map(|v| v * v).sum::<f64>() / win as f64;
        log_e.push((ms + 1e-10).ln());
        rms.push(ms.sqrt());
        let crossings = frame.windows(2).filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0)).count();
        zcr.push(crossings as f64 / (win - 1) as f64);
        let windowed: Vec<f64> = frame.iter().zip(&window).map(|(a, b)| a * b).collect();
        let power = spectrum.power(&windowed);
        let total: f64 = power.iter().sum();
        if total <= 1e-20 {
            centroid.push(0.0);
            rolloff.push(0.0);
        } else {
            centroid.push(power.iter().enumerate().map(|(k, p)| k as f64 * bin_hz * p).sum::<f64>() / total);
            let mut acc = 0.0;
            let mut edge = power.len() - 1;
            for (k, p) in power.iter().enumerate() {
                acc += p;
                if acc >= ROLLOFF * total {
                    edge = k;
                    break;
                }
            }
            rolloff.push(edge as f64 * bin_hz);
        }
    }

    let hop_s = hop as f64 / rate as f64;
    let times: Vec<f64> = (0..n).map(|t| t as f64 * hop_s).collect();
    let voiced_idx: Vec<usize> = (0..n).filter(|&t| pitch[t].voiced()).collect();
    let f0v: Vec<f64> = voiced_idx.iter().map(|&t| pitch[t].f0).collect();
    let f0_times: Vec<f64> = voiced_idx.iter().map(|&t| times[t]).collect();
    let f0_deltas: Vec<f64> = voiced_idx
        .windows(2)
        .filter(|w| w[1] == w[0] + 1)
        .map(|w| pitch[w[1]].f0 - pitch[w[0]].f0)
        .collect();
    let e_deltas: Vec<f64> = log_e.windows(2).map(|w| w[1] - w[0]).collect();
    let hnr: Vec<f64> = pitch
        .iter()
        .map(|p| {
            let r = p.periodicity.clamp(1e-3, 0.999);
            10.0 * (r / (1.0 - r)).log10()
        })
        .collect();

    let loudest = log_e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let quiet_floor = loudest + PAUSE_DB / 10.0 * std::f64::consts::LN_10;
    let quiet: Vec<bool> = log_e.iter().map(|&e| e < quiet_floor).collect();
    let pause_runs = runs(&quiet).into_iter().filter(|&r| r >= MIN_PAUSE_FRAMES).collect::<Vec<_>>();
    let pause_frames: usize = pause_runs.iter().sum();
    let voiced_flags: Vec<bool> = pitch.iter().map(|p| p.voiced()).collect();
    let voiced_runs = runs(&voiced_flags);

    let (f0_min, f0_max) = if f0v.is_empty() {
        (0.0, 0.0)
    } else {
        (f0v.iter().cloned().fold(f64::INFINITY, f64::min), f0v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    };
    let (e_min, e_max) =
        (log_e.iter().cloned().fold(f64::INFINITY, f64::min), log_e.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let tokens = token_count.max(1) as f64;

    let v = vec![
        dsp::mean(&f0v),
        dsp::std_dev(&f0v),
        f0_min,
        f0_max,
        f0_max - f0_min,
        dsp::median(&f0v),
        dsp::slope(&f0_times, &f0v),
        dsp::mean(&log_e),
        dsp::std_dev(&log_e),
        e_min,
        e_max,
        e_max - e_min,
        dsp::slope(&times, &log_e),
        voiced_idx.len() as f64 / n as f64,
        voiced_idx.len() as f64 / tokens,
        dsp::mean(&zcr),
        dsp::std_dev(&zcr),
        dsp::mean(&e_deltas),
        dsp::std_dev(&e_deltas),
        dsp::mean(&f0_deltas),
        dsp::std_dev(&f0_deltas),
        dsp::mean(&centroid),
        dsp::std_dev(&centroid),
        dsp::mean(&rolloff),
        dsp::std_dev(&rolloff),
        dsp::mean(&rms),
        dsp::std_dev(&rms),
        rms.iter().cloned().fold(0.0, f64::max),
        pause_frames as f64 / n as f64,
        pause_runs.len() as f64,
        wave.duration_secs(),
        dsp::mean(&hnr),
        dsp::std_dev(&hnr),
        voiced_runs.len() as f64,
        if voiced_runs.is_empty() {
            0.0
        } else {
            voiced_runs.iter().sum::<usize>() as f64 / voiced_runs.len() as f64 * hop_s
        },
    ];
    debug_assert_eq!(v.len(), PROSODY_DIM);
    Ok(v.into_iter().map(|x| if x.is_finite() { x } else { 0.0 }).collect())
}

/// Lengths of the runs of `true`.
fn runs(flags: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut cur = 0;
    for &f in flags {
        if f {
            cur += 1;
        } else if cur > 0 {
            out.push(cur);
            cur = 0;
        }
    }
    if cur > 0 {
        out.push(cur);
    }
    out
}
