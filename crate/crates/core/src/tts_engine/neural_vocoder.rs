//! Autoregressive sample-level vocoder: a GRU predicts the next 8-bit mu-law
//! sample from the previous sample and frame features (scaled cepstra, F0,
//! voicing) held constant across each frame's samples.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acoustic::AcousticFrames;
use super::conditioning::Scaler;
use super::data::ACOUSTIC_DIM;
use crate::audio::{Waveform, DEFAULT_RATE};
use crate::corpus::mfcc::{MfccAnalyzer, MfccConfig};
use crate::error::{Error, Result};
use crate::nn::tape::softmax;
use crate::nn::{clip_global_norm, Adam, Checkpoint, Dense, Gru, Mat, Params, Tape};
use crate::pitch::estimate_f0;

pub const MU: f64 = 255.0;
pub const LEVELS: usize = 256;
/// Frame features: cepstra, scaled F0, voicing.
const COND_DIM: usize = ACOUSTIC_DIM + 2;
const INPUT_DIM: usize = 1 + COND_DIM;
const CHECKPOINT_KIND: &str = "neural_vocoder";

/// Mu-law companding of `x ∈ [−1, 1]` onto `[−1, 1]`.
pub fn mu_compress(x: f64) -> f64 {
    let x = x.clamp(-1.0, 1.0);
    x.signum() * (1.0 + MU * x.abs()).ln() / (1.0 + MU).ln()
}

pub fn mu_expand(y: f64) -> f64 {
    y.signum() * ((1.0 + MU).powf(y.abs()) - 1.0) / MU
}

pub fn mu_law_encode(x: f64) -> u8 {
    ((mu_compress(x) + 1.0) / 2.0 * MU).round() as u8
}

pub fn mu_law_decode(q: u8) -> f64 {
    mu_expand(2.0 * q as f64 / MU - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralVocoderConfig {
    pub hidden: usize,
    pub rate: u32,
    pub epochs: usize,
    /// Samples per training segment.
    pub segment: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Sampling temperature at synthesis; 0 picks the most likely level.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for NeuralVocoderConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            rate: DEFAULT_RATE,
            epochs: 50,
            segment: 240,
            batch_size: 16,
            lr: 2e-3,
            clip_norm: 5.0,
            temperature: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layers {
    gru: Gru,
    hidden: Dense,
    out: Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    config: NeuralVocoderConfig,
    scaler: Scaler,
    trained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralVocoder {
    pub config: NeuralVocoderConfig,
    pub params: Params,
    layers: Layers,
    pub scaler: Scaler,
    pub trained: bool,
}

/// Paired frame features and audio for vocoder training.
#[derive(Debug, Clone, PartialEq)]
pub struct VocoderExample {
    pub mfcc: Mat,
    pub f0: Vec<f64>,
    pub samples: Vec<f64>,
}

impl VocoderExample {
    /// Analyses a waveform; the audio is cut to `frames × hop` samples.
    pub fn from_wave(wave: &Waveform) -> Result<Self> {
        let mfcc = MfccAnalyzer::new(MfccConfig::default(), wave.rate()).cepstra(wave)?;
        let f0 = estimate_f0(wave)?;
        let frames = mfcc.rows.min(f0.len());
        let hop = MfccConfig::default().hop(wave.rate());
        let mut samples = wave.to_f64();
        samples.truncate(frames * hop);
        Ok(Self { mfcc: mfcc.slice_rows(0, frames), f0: f0[..frames].to_vec(), samples })
    }
}

/// Toy corpus of steady sine tones with their analysed features.
pub fn sine_corpus(rate: u32, freqs: &[f64], seconds: f64) -> Result<Vec<VocoderExample>> {
    freqs
        .iter()
        .map(|&f| {
            let n = (seconds * rate as f64) as usize;
            let x: Vec<f64> =
                (0..n).map(|i| 0.5 * (std::f64::consts::TAU * f * i as f64 / rate as f64).sin()).collect();
            VocoderExample::from_wave(&Waveform::from_f64(&x, rate))
        })
        .collect()
}

impl NeuralVocoder {
    pub fn new(config: NeuralVocoderConfig) -> Result<Self> {
        if config.hidden == 0 {
            return Err(Error::invalid("vocoder hidden size must be positive"));
        }
        if config.segment < 2 || config.batch_size == 0 {
            return Err(Error::invalid("vocoder segment and batch size must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Params::default();
        let h = config.hidden;
        let layers = Layers {
            gru: Gru::new(&mut params, "gru", INPUT_DIM, h, &mut rng),
            hidden: Dense::new(&mut params, "hidden", h, h, &mut rng),
            out: Dense::new(&mut params, "out", h, LEVELS, &mut rng),
        };
        Ok(Self { config, params, layers, scaler: Scaler::identity(ACOUSTIC_DIM), trained: false })
    }

    fn hop(&self) -> usize {
        MfccConfig::default().hop(self.config.rate)
    }

    fn frame_features(&self, ceps: &[f64], f0: f64) -> [f64; COND_DIM] {
        let mut c = [0.0; COND_DIM];
        c[..ACOUSTIC_DIM].copy_from_slice(ceps);
        self.scaler.forward(&mut c[..ACOUSTIC_DIM]);
        if f0 > 0.0 {
            c[ACOUSTIC_DIM] = (f0 - 200.0) / 100.0;
            c[ACOUSTIC_DIM + 1] = 1.0;
        }
        c
    }

    /// Teacher-forced inputs and labels for segments `(example, start)`.
    fn segment_batch(&self, data: &[VocoderExample], segs: &[(usize, usize)]) -> (Mat, Vec<usize>) {
        let (b, s, hop) = (segs.len(), self.config.segment, self.hop());
        let mut x = Mat::zeros(s * b, INPUT_DIM);
        let mut labels = vec![0; s * b];
        for (j, &(e, start)) in segs.iter().enumerate() {
            let ex = &data[e];
            for i in 0..s {
                let pos = start + i;
                let row = x.row_mut(i * b + j);
                row[0] = if pos == 0 { 0.0 } else { mu_law_decode(mu_law_encode(ex.samples[pos - 1])) };
                let f = (pos / hop).min(ex.mfcc.rows - 1);
                row[1..].copy_from_slice(&self.frame_features(ex.mfcc.row(f), ex.f0[f]));
                labels[i * b + j] = mu_law_encode(ex.samples[pos]) as usize;
            }
        }
        (x, labels)
    }

    fn batch_loss(&self, tape: &mut Tape, x: &Mat, labels: &[usize], b: usize) -> crate::nn::Var {
        let l = &self.layers;
        let xv = tape.input(x.clone());
        let hs = l.gru.run(tape, xv, b);
        let h = l.hidden.forward(tape, hs);
        let h = tape.relu(h);
        let logits = l.out.forward(tape, h);
        tape.softmax_xent(logits, labels, &vec![1.0; labels.len()])
    }

    /// Trains on random segments; returns the mean loss of each epoch.
    pub fn train(&mut self, data: &[VocoderExample]) -> Result<Vec<f64>> {
        let seg = self.config.segment;
        let usable: Vec<usize> = (0..data.len()).filter(|&i| data[i].samples.len() > seg && data[i].mfcc.rows > 0).collect();
        if usable.is_empty() {
            return Err(Error::invalid(format!("no training audio longer than {seg} samples")));
        }
        self.scaler = Scaler::fit(
            usable.iter().flat_map(|&e| (0..data[e].mfcc.rows).map(move |r| data[e].mfcc.row(r))),
            ACOUSTIC_DIM,
        );
        let total: usize = usable.iter().map(|&e| data[e].samples.len()).sum();
        let steps = total.div_ceil(seg * self.config.batch_size).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(1));
        let mut adam = Adam::new(&self.params, self.config.lr);
        let mut history = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            let mut sum = 0.0;
            for _ in 0..steps {
                let segs: Vec<(usize, usize)> = (0..self.config.batch_size)
                    .map(|_| {
                        let e = usable[rng.random_range(0..usable.len())];
                        (e, rng.random_range(0..data[e].samples.len() - seg))
                    })
                    .collect();
                let (x, labels) = self.segment_batch(data, &segs);
                let mut grads = {
                    let mut tape = Tape::new(&self.params);
                    let loss = self.batch_loss(&mut tape, &x, &labels, segs.len());
                    sum += tape.scalar(loss);
                    tape.backward(loss)
                };
                clip_global_norm(&mut grads, self.config.clip_norm);
                adam.step(&mut self.params, &grads);
            }
            history.push(sum / steps as f64);
        }
        self.trained = true;
        Ok(history)
    }

    /// Generates `frames × hop` samples one at a time.
    pub fn vocode(&self, frames: &AcousticFrames, f0: &[f64]) -> Result<Waveform> {
        if !self.trained {
            return Err(Error::Untrained);
        }
        let t_len = frames.frames();
        if f0.len() != t_len {
            return Err(Error::Shape(format!("{} F0 values for {t_len} frames", f0.len())));
        }
        let (h, hop) = (self.config.hidden, self.hop());
        let l = &self.layers;
        let (wx, bx) = (self.params.get(l.gru.wx), self.params.get(l.gru.bx));
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut state = vec![0.0; h];
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(t_len * hop);
        for t in 0..t_len {
            // Projection of the frame features, shared by the frame's samples.
            let cond = self.frame_features(frames.mfcc.row(t), f0[t]);
            let mut base = bx.data.clone();
            for (i, c) in cond.iter().enumerate() {
                for (o, w) in base.iter_mut().zip(wx.row(i + 1)) {
                    *o += c * w;
                }
            }
            for _ in 0..hop {
                let xp: Vec<f64> = base.iter().zip(wx.row(0)).map(|(b, w)| b + prev * w).collect();
                l.gru.step(&self.params, &xp, &mut state);
                let hid: Vec<f64> = l.hidden.apply(&self.params, &state).into_iter().map(|v| v.max(0.0)).collect();
                let logits = l.out.apply(&self.params, &hid);
                let q = self.pick(&logits, &mut rng);
                prev = mu_law_decode(q as u8);
                out.push(prev);
            }
        }
        Ok(Waveform::from_f64(&out, self.config.rate))
    }

    fn pick(&self, logits: &[f64], rng: &mut impl Rng) -> usize {
        let temp = self.config.temperature;
        if temp <= 0.0 {
            return logits.iter().enumerate().fold(0, |best, (i, &v)| if v > logits[best] { i } else { best });
        }
        let scaled: Vec<f64> = logits.iter().map(|v| v / temp).collect();
        let p = softmax(&scaled);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        LEVELS - 1
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = Meta { config: self.config.clone(), scaler: self.scaler.clone(), trained: self.trained };
        Ok(Checkpoint { kind: CHECKPOINT_KIND.into(), config: serde_json::to_value(meta)?, tensors: self.params.clone() })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let meta: Meta = serde_json::from_value(ck.config.clone())?;
        let mut m = Self::new(meta.config)?;
        ck.restore_into(&mut m.params)?;
        m.scaler = meta.scaler;
        m.trained = meta.trained;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

pub fn train_neural_vocoder(data: &[VocoderExample], config: NeuralVocoderConfig) -> Result<(NeuralVocoder, Vec<f64>)> {
    let mut v = NeuralVocoder::new(config)?;
    let history = v.train(data)?;
    Ok((v, history))
}

pub fn vocode_neural(model: &NeuralVocoder, frames: &AcousticFrames, f0: &[f64]) -> Result<Waveform> {
    model.vocode(frames, f0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_law_round_trip() {
        let bound = (1.0 + MU).ln() * (1.0 + MU) / MU / MU;
        for i in 0..=2000 {
            let x = -1.0 + i as f64 / 1000.0;
            let back = mu_law_decode(mu_law_encode(x));
            // Quantization error is under half a level in the companded domain.
            assert!((mu_compress(back) - mu_compress(x)).abs() < 1.0 / 127.0);
            assert!((back - x).abs() <= bound + 1e-12);
        }
        assert_eq!(mu_law_encode(-1.0), 0);
        assert_eq!(mu_law_encode(1.0), 255);
        assert!((mu_law_decode(mu_law_encode(0.0))).abs() < 1e-2);
    }

    #[test]
    fn zero_hidden_rejected() {
        assert!(NeuralVocoder::new(NeuralVocoderConfig { hidden: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn short_training_lowers_loss_and_output_is_bounded() {
        let data = sine_corpus(DEFAULT_RATE, &[220.0, 330.0], 0.1).unwrap();
        let cfg = NeuralVocoderConfig { hidden: 16, epochs: 6, segment: 60, batch_size: 8, ..Default::default() };
        let (v, hist) = train_neural_vocoder(&data, cfg).unwrap();
        assert!(hist.last().unwrap() < hist.first().unwrap());
        let frames = AcousticFrames::new(data[0].mfcc.slice_rows(0, 3)).unwrap();
        let w = v.vocode(&frames, &data[0].f0[..3]).unwrap();
        assert_eq!(w.len(), 3 * 240);
        assert!(w.samples().iter().all(|s| (-1.0..=1.0).contains(s)));
        let again = v.vocode(&frames, &data[0].f0[..3]).unwrap();
        assert_eq!(w, again);
    }
}
