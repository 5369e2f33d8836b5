//! Prosody model: per-phoneme duration, F0 start/end and voicing from
//! linguistic features, a style embedding and a speaker id.
//!
//! One LSTM layer runs over the phoneme sequence with the conditioning
//! vector entering every step; each output attends (dot product) over a
//! projection of the utterance's linguistic features, and a small MLP maps
//! `[state ; context]` to the four per-phoneme outputs.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conditioning::{speaker_index, style_rows, CondLayer, Scaler};
use super::data::TtsExample;
use super::frontend::{LinguisticSequence, LING_DIM, PAU};
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Dense, Lstm, Mat, Params, Tape, Var};
use crate::style_model::StyleEmbedding;

pub const MIN_F0: f64 = 50.0;
pub const MAX_F0: f64 = 500.0;
/// Output columns: log duration, F0 start, F0 end (scaled), voicing.
pub const PROSODY_OUT: usize = 4;
const MAX_PHONE_FRAMES: f64 = 200.0;
const CHECKPOINT_KIND: &str = "prosody_model";

/// Frame-level prosody for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsodyTrack {
    pub durations: Vec<usize>,
    pub f0: Vec<f64>,
}

impl ProsodyTrack {
    pub fn new(durations: Vec<usize>, f0: Vec<f64>) -> Result<Self> {
        let t = Self { durations, f0 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.durations.iter().any(|&d| d == 0) {
            return Err(Error::invalid("phoneme durations must be at least one frame"));
        }
        let total: usize = self.durations.iter().sum();
        if total != self.f0.len() {
            return Err(Error::Shape(format!("durations sum to {total} but F0 has {} frames", self.f0.len())));
        }
        if self.f0.iter().any(|&v| !v.is_finite() || (v != 0.0 && !(MIN_F0..=MAX_F0).contains(&v))) {
            return Err(Error::invalid("F0 outside the voiced range"));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.f0.len()
    }

    /// Mean over voiced frames, `None` when nothing is voiced.
    pub fn voiced_mean(&self) -> Option<f64> {
        let v: Vec<f64> = self.f0.iter().copied().filter(|&x| x > 0.0).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhoneProsody {
    pub duration: usize,
    pub f0_start: f64,
    pub f0_end: f64,
    pub voiced: bool,
}

/// Expands per-phoneme predictions to frames, interpolating F0 linearly
/// from the first to the last frame of each voiced phoneme.
pub fn track_from_phones(phones: &[PhoneProsody]) -> Result<ProsodyTrack> {
    let mut durations = Vec::with_capacity(phones.len());
    let mut f0 = Vec::new();
    for p in phones {
        let d = p.duration.max(1);
        durations.push(d);
        for k in 0..d {
            if !p.voiced {
                f0.push(0.0);
                continue;
            }
            let x = if d == 1 { 0.5 } else { k as f64 / (d - 1) as f64 };
            f0.push((p.f0_start + x * (p.f0_end - p.f0_start)).clamp(MIN_F0, MAX_F0));
        }
    }
    ProsodyTrack::new(durations, f0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProsodyConfig {
    pub hidden: usize,
    pub speaker_dim: usize,
    pub out_hidden: usize,
    pub speakers: Vec<String>,
    /// Baseline variant: the style input is replaced by zeros.
    pub zero_style: bool,
    pub seed: u64,
}

impl Default for ProsodyConfig {
    fn default() -> Self {
        Self { hidden: 256, speaker_dim: 8, out_hidden: 64, speakers: vec!["spk0".into()], zero_style: false, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layers {
    cond: CondLayer,
    lstm: Lstm,
    memory: Dense,
    hidden: Dense,
    out: Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    config: ProsodyConfig,
    scaler: Scaler,
    trained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyModel {
    pub config: ProsodyConfig,
    pub params: Params,
    layers: Layers,
    /// Standardizes log duration and F0 start/end targets.
    pub scaler: Scaler,
    pub trained: bool,
    /// Refuse to predict with an untrained model.
    pub strict: bool,
}

/// Padded time-major batch.
pub(crate) struct ProsodyBatch {
    x: Mat,
    lengths: Vec<usize>,
    styles: Mat,
    speakers: Vec<usize>,
    pub targets: Mat,
    pub mask: Mat,
}

impl ProsodyModel {
    pub fn new(config: ProsodyConfig) -> Result<Self> {
        if config.hidden == 0 || config.out_hidden == 0 {
            return Err(Error::invalid("prosody model sizes must be positive"));
        }
        if config.speakers.is_empty() {
            return Err(Error::invalid("prosody model needs at least one speaker"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Params::default();
        let h = config.hidden;
        let layers = Layers {
            cond: CondLayer::new(&mut params, "cond", config.speakers.len(), config.speaker_dim, 4 * h, &mut rng),
            lstm: Lstm::new(&mut params, "lstm", LING_DIM, h, &mut rng),
            memory: Dense::new(&mut params, "memory", LING_DIM, h, &mut rng),
            hidden: Dense::new(&mut params, "hidden", 2 * h, config.out_hidden, &mut rng),
            out: Dense::new(&mut params, "out", config.out_hidden, PROSODY_OUT, &mut rng),
        };
        Ok(Self { config, params, layers, scaler: Scaler::identity(3), trained: false, strict: true })
    }

    pub(crate) fn make_batch(
        &self,
        items: &[(&LinguisticSequence, &StyleEmbedding, &str)],
        targets: Option<&[&TtsExample]>,
    ) -> Result<ProsodyBatch> {
        let b = items.len();
        if b == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let lengths: Vec<usize> = items.iter().map(|i| i.0.len()).collect();
        if lengths.contains(&0) {
            return Err(Error::invalid("empty phoneme sequence"));
        }
        let steps = *lengths.iter().max().unwrap();
        let mut x = Mat::zeros(steps * b, LING_DIM);
        for (j, (ling, _, _)) in items.iter().enumerate() {
            let f = ling.features();
            for t in 0..f.rows {
                x.row_mut(t * b + j).copy_from_slice(f.row(t));
            }
        }
        let styles = style_rows(&items.iter().map(|i| i.1).collect::<Vec<_>>(), self.config.zero_style);
        let speakers =
            items.iter().map(|i| speaker_index(&self.config.speakers, i.2)).collect::<Result<Vec<_>>>()?;
        let mut tmat = Mat::zeros(steps * b, PROSODY_OUT);
        let mut mask = Mat::zeros(steps * b, PROSODY_OUT);
        if let Some(ex) = targets {
            for (j, e) in ex.iter().enumerate() {
                for t in 0..lengths[j] {
                    let row = tmat.row_mut(t * b + j);
                    row.copy_from_slice(&self.target_row(e, t));
                    mask.row_mut(t * b + j).fill(1.0);
                }
            }
        }
        Ok(ProsodyBatch { x, lengths, styles, speakers, targets: tmat, mask })
    }

    fn raw_target(e: &TtsExample, t: usize) -> [f64; 3] {
        let tg = &e.targets;
        [(tg.durations[t] as f64).ln(), tg.f0_start[t], tg.f0_end[t]]
    }

    fn target_row(&self, e: &TtsExample, t: usize) -> [f64; PROSODY_OUT] {
        let mut r = Self::raw_target(e, t);
        self.scaler.forward(&mut r);
        [r[0], r[1], r[2], if e.targets.voiced[t] { 1.0 } else { 0.0 }]
    }

    /// Fits the target scaler on training examples.
    pub fn fit_scaler(&mut self, examples: &[TtsExample]) {
        let rows: Vec<[f64; 3]> =
            examples.iter().flat_map(|e| (0..e.ling.len()).map(move |t| Self::raw_target(e, t))).collect();
        self.scaler = Scaler::fit(rows.iter().map(|r| r.as_slice()), 3);
    }

    /// Records the network; returns `(T·B)×4` outputs and the attention node.
    pub(crate) fn forward(&self, tape: &mut Tape, batch: &ProsodyBatch) -> (Var, Var) {
        let l = &self.layers;
        let b = batch.lengths.len();
        let steps = batch.x.rows / b;
        let x = tape.input(batch.x.clone());
        let bias = l.cond.forward(tape, &batch.styles, &batch.speakers);
        let hs = l.lstm.run(tape, x, b, Some(bias));
        let mem = l.memory.forward(tape, x);
        let order: Vec<usize> = (0..b).flat_map(|j| (0..steps).map(move |t| t * b + j)).collect();
        let mem = tape.gather_rows(mem, &order);
        let ctx = tape.attention(hs, mem, &batch.lengths, steps);
        let joined = tape.concat_cols(&[hs, ctx]);
        let h = l.hidden.forward(tape, joined);
        let h = tape.tanh(h);
        (l.out.forward(tape, h), ctx)
    }

    pub(crate) fn loss(&self, tape: &mut Tape, batch: &ProsodyBatch) -> Var {
        let (out, _) = self.forward(tape, batch);
        tape.mse(out, batch.targets.clone(), batch.mask.clone())
    }

    fn check_ready(&self) -> Result<()> {
        if self.strict && !self.trained {
            return Err(Error::Untrained);
        }
        Ok(())
    }

    /// Per-phoneme predictions. Pauses are always unvoiced.
    pub fn predict_phones(&self, ling: &LinguisticSequence, style: &StyleEmbedding, speaker: &str) -> Result<Vec<PhoneProsody>> {
        self.check_ready()?;
        if !style.is_valid(crate::style_model::style_embedding::SIMPLEX_TOLERANCE) {
            return Err(Error::invalid("style embedding is not a probability vector"));
        }
        let batch = self.make_batch(&[(ling, style, speaker)], None)?;
        let mut tape = Tape::new(&self.params);
        let (out, _) = self.forward(&mut tape, &batch);
        let out = tape.value(out);
        Ok((0..ling.len())
            .map(|t| {
                let row = out.row(t);
                let mut r = [row[0], row[1], row[2]];
                self.scaler.inverse(&mut r);
                PhoneProsody {
                    duration: r[0].clamp(0.0, MAX_PHONE_FRAMES.ln()).exp().round().max(1.0) as usize,
                    f0_start: r[1],
                    f0_end: r[2],
                    voiced: row[3] > 0.5 && ling.phones[t].id != PAU,
                }
            })
            .collect())
    }

    pub fn predict(&self, ling: &LinguisticSequence, style: &StyleEmbedding, speaker: &str) -> Result<ProsodyTrack> {
        track_from_phones(&self.predict_phones(ling, style, speaker)?)
    }

    /// Attention weights (`phonemes × phonemes`) for one utterance.
    pub fn attention(&self, ling: &LinguisticSequence, style: &StyleEmbedding, speaker: &str) -> Result<Mat> {
        let batch = self.make_batch(&[(ling, style, speaker)], None)?;
        let mut tape = Tape::new(&self.params);
        let (_, ctx) = self.forward(&mut tape, &batch);
        Ok(tape.attention_weights(ctx).expect("attention node").clone())
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

/// Predicts a frame-level prosody track.
pub fn predict_prosody(
    model: &ProsodyModel,
    ling: &LinguisticSequence,
    style: &StyleEmbedding,
    speaker: &str,
) -> Result<ProsodyTrack> {
    model.predict(ling, style, speaker)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_error;
    use crate::tts_engine::frontend::{text_to_linguistic, Lexicon};

    fn small() -> ProsodyModel {
        let cfg = ProsodyConfig { hidden: 6, speaker_dim: 2, out_hidden: 4, seed: 5, ..Default::default() };
        let mut m = ProsodyModel::new(cfg).unwrap();
        m.trained = true;
        m
    }

    fn style() -> StyleEmbedding {
        StyleEmbedding::new([0.01, 0.01, 0.01, 0.95, 0.01, 0.01]).unwrap()
    }

    fn fake_example(text: &str) -> TtsExample {
        let ling = text_to_linguistic(text, Lexicon::builtin()).unwrap();
        let n = ling.len();
        let durations: Vec<usize> = (0..n).map(|i| 2 + i % 3).collect();
        let frames: usize = durations.iter().sum();
        TtsExample {
            id: text.into(),
            targets: super::super::data::PhoneTargets {
                durations,
                f0_start: (0..n).map(|i| 180.0 + i as f64).collect(),
                f0_end: (0..n).map(|i| 190.0 - i as f64).collect(),
                voiced: (0..n).map(|i| i % 2 == 0).collect(),
            },
            ling,
            style: style(),
            speaker: "spk0".into(),
            f0: vec![200.0; frames],
            mfcc: Mat::zeros(frames, 13),
        }
    }

    #[test]
    fn track_invariants() {
        let phones = [
            PhoneProsody { duration: 3, f0_start: 100.0, f0_end: 120.0, voiced: true },
            PhoneProsody { duration: 0, f0_start: 0.0, f0_end: 0.0, voiced: false },
            PhoneProsody { duration: 1, f0_start: 900.0, f0_end: 900.0, voiced: true },
        ];
        let t = track_from_phones(&phones).unwrap();
        assert_eq!(t.durations, vec![3, 1, 1]);
        assert_eq!(t.f0, vec![100.0, 110.0, 120.0, 0.0, MAX_F0]);
        assert!(ProsodyTrack::new(vec![2], vec![100.0]).is_err());
        assert!(ProsodyTrack::new(vec![1], vec![20.0]).is_err());
    }

    #[test]
    fn prediction_is_deterministic_and_aligned() {
        let m = small();
        let ling = text_to_linguistic("the cat sat.", Lexicon::builtin()).unwrap();
        let a = m.predict(&ling, &style(), "spk0").unwrap();
        let b = m.predict(&ling, &style(), "spk0").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.durations.iter().sum::<usize>(), a.f0.len());
        assert_eq!(a.durations.len(), ling.len());
        assert!(m.predict(&ling, &style(), "nobody").is_err());
    }

    #[test]
    fn untrained_strict_model_refuses() {
        let mut m = small();
        m.trained = false;
        let ling = text_to_linguistic("hi", Lexicon::builtin()).unwrap();
        assert!(matches!(m.predict(&ling, &style(), "spk0"), Err(Error::Untrained)));
        m.strict = false;
        assert!(m.predict(&ling, &style(), "spk0").is_ok());
    }

    #[test]
    fn attention_rows_are_distributions() {
        let m = small();
        let ling = text_to_linguistic("hello world", Lexicon::builtin()).unwrap();
        let w = m.attention(&ling, &style(), "spk0").unwrap();
        assert_eq!((w.rows, w.cols), (ling.len(), ling.len()));
        for r in 0..w.rows {
            assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut m = small();
        let ex = [fake_example("hi there"), fake_example("two cats?")];
        m.fit_scaler(&ex);
        let items: Vec<_> = ex.iter().map(|e| (&e.ling, &e.style, e.speaker.as_str())).collect();
        let refs: Vec<&TtsExample> = ex.iter().collect();
        let batch = m.make_batch(&items, Some(&refs)).unwrap();
        let mut tape = Tape::new(&m.params);
        let loss = m.loss(&mut tape, &batch);
        let grads = tape.backward(loss);
        let err = gradient_error(&m.params, &grads, 1e-5, 30, |p| {
            let probe = ProsodyModel { params: p.clone(), ..m.clone() };
            let mut t = Tape::new(p);
            let l = probe.loss(&mut t, &batch);
            t.scalar(l)
        });
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = small();
        m.fit_scaler(&[fake_example("hi")]);
        let back = ProsodyModel::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint().unwrap().to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
