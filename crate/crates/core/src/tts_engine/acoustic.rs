//! Acoustic model: frame-level linguistic and prosodic inputs to 13-dim
//! cepstra through stacked unidirectional LSTMs. The style embedding and
//! speaker vector enter every step of the first layer.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conditioning::{speaker_index, style_rows, CondLayer, Scaler};
use super::data::{TtsExample, ACOUSTIC_DIM};
use super::frontend::{LinguisticSequence, LING_DIM};
use super::prosody::ProsodyTrack;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Dense, Lstm, Mat, Params, Tape, Var};
use crate::style_model::StyleEmbedding;

/// Frame input: phoneme features, position within the phoneme, scaled F0
/// and a voicing flag.
pub const ACOUSTIC_IN: usize = LING_DIM + 3;
const CHECKPOINT_KIND: &str = "acoustic_model";

/// `T×13` cepstra.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticFrames {
    pub mfcc: Mat,
}

impl AcousticFrames {
    pub fn new(mfcc: Mat) -> Result<Self> {
        if mfcc.cols != ACOUSTIC_DIM {
            return Err(Error::Shape(format!("acoustic frames must be {ACOUSTIC_DIM} wide, got {}", mfcc.cols)));
        }
        if !mfcc.all_finite() {
            return Err(Error::invalid("non-finite acoustic frame values"));
        }
        Ok(Self { mfcc })
    }

    pub fn frames(&self) -> usize {
        self.mfcc.rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcousticConfig {
    pub hidden: usize,
    pub layers: usize,
    pub speaker_dim: usize,
    pub speakers: Vec<String>,
    pub zero_style: bool,
    pub seed: u64,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        Self { hidden: 256, layers: 2, speaker_dim: 8, speakers: vec!["spk0".into()], zero_style: false, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layers {
    cond: CondLayer,
    lstms: Vec<Lstm>,
    out: Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    config: AcousticConfig,
    scaler: Scaler,
    f0_scaler: Scaler,
    trained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    pub config: AcousticConfig,
    pub params: Params,
    layers: Layers,
    /// Standardizes the cepstral targets.
    pub scaler: Scaler,
    /// Standardizes voiced F0 on the input side.
    pub f0_scaler: Scaler,
    pub trained: bool,
    pub strict: bool,
}

pub(crate) struct AcousticBatch {
    x: Mat,
    batch: usize,
    styles: Mat,
    speakers: Vec<usize>,
    pub targets: Mat,
    pub mask: Mat,
}

/// Frame-level input rows for one utterance.
pub fn frame_inputs(ling: &LinguisticSequence, track: &ProsodyTrack, f0_scaler: &Scaler) -> Result<Mat> {
    track.validate()?;
    if ling.len() != track.durations.len() {
        return Err(Error::Shape(format!(
            "{} phonemes but {} durations",
            ling.len(),
            track.durations.len()
        )));
    }
    let feats = ling.features();
    let mut x = Mat::zeros(track.frames(), ACOUSTIC_IN);
    let mut t = 0;
    for (p, &d) in track.durations.iter().enumerate() {
        for k in 0..d {
            let row = x.row_mut(t);
            row[..LING_DIM].copy_from_slice(feats.row(p));
            row[LING_DIM] = (k as f64 + 0.5) / d as f64;
            let f = track.f0[t];
            if f > 0.0 {
                row[LING_DIM + 1] = (f - f0_scaler.mean[0]) / f0_scaler.std[0];
                row[LING_DIM + 2] = 1.0;
            }
            t += 1;
        }
    }
    Ok(x)
}

impl AcousticModel {
    pub fn new(config: AcousticConfig) -> Result<Self> {
        if config.hidden == 0 || config.layers == 0 {
            return Err(Error::invalid("acoustic model sizes must be positive"));
        }
        if config.speakers.is_empty() {
            return Err(Error::invalid("acoustic model needs at least one speaker"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Params::default();
        let h = config.hidden;
        let cond = CondLayer::new(&mut params, "cond", config.speakers.len(), config.speaker_dim, 4 * h, &mut rng);
        let lstms = (0..config.layers)
            .map(|i| Lstm::new(&mut params, &format!("lstm{i}"), if i == 0 { ACOUSTIC_IN } else { h }, h, &mut rng))
            .collect();
        let out = Dense::new(&mut params, "out", h, ACOUSTIC_DIM, &mut rng);
        Ok(Self {
            config,
            params,
            layers: Layers { cond, lstms, out },
            scaler: Scaler::identity(ACOUSTIC_DIM),
            f0_scaler: Scaler { mean: vec![200.0], std: vec![50.0] },
            trained: false,
            strict: true,
        })
    }

    pub fn fit_scalers(&mut self, examples: &[TtsExample]) {
        self.scaler = Scaler::fit(examples.iter().flat_map(|e| (0..e.mfcc.rows).map(move |r| e.mfcc.row(r))), ACOUSTIC_DIM);
        let voiced: Vec<[f64; 1]> = examples.iter().flat_map(|e| e.f0.iter().filter(|&&f| f > 0.0).map(|&f| [f])).collect();
        if !voiced.is_empty() {
            self.f0_scaler = Scaler::fit(voiced.iter().map(|r| r.as_slice()), 1);
        }
    }

    /// Inputs are `(ling, track, style, speaker)`; targets, when given, are
    /// the examples' cepstra.
    pub(crate) fn make_batch(
        &self,
        items: &[(&LinguisticSequence, &ProsodyTrack, &StyleEmbedding, &str)],
        targets: Option<&[&Mat]>,
    ) -> Result<AcousticBatch> {
        let b = items.len();
        if b == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let inputs = items
            .iter()
            .map(|(l, tr, _, _)| frame_inputs(l, tr, &self.f0_scaler))
            .collect::<Result<Vec<_>>>()?;
        let steps = inputs.iter().map(|m| m.rows).max().unwrap();
        let mut x = Mat::zeros(steps * b, ACOUSTIC_IN);
        let mut tmat = Mat::zeros(steps * b, ACOUSTIC_DIM);
        let mut mask = Mat::zeros(steps * b, ACOUSTIC_DIM);
        for (j, m) in inputs.iter().enumerate() {
            for t in 0..m.rows {
                x.row_mut(t * b + j).copy_from_slice(m.row(t));
            }
            if let Some(tg) = targets {
                let tg = tg[j];
                if tg.rows != m.rows || tg.cols != ACOUSTIC_DIM {
                    return Err(Error::Shape(format!("target frames {} vs input frames {}", tg.rows, m.rows)));
                }
                for t in 0..m.rows {
                    let row = tmat.row_mut(t * b + j);
                    row.copy_from_slice(tg.row(t));
                    self.scaler.forward(row);
                    mask.row_mut(t * b + j).fill(1.0);
                }
            }
        }
        let styles = style_rows(&items.iter().map(|i| i.2).collect::<Vec<_>>(), self.config.zero_style);
        let speakers =
            items.iter().map(|i| speaker_index(&self.config.speakers, i.3)).collect::<Result<Vec<_>>>()?;
        Ok(AcousticBatch { x, batch: b, styles, speakers, targets: tmat, mask })
    }

    pub(crate) fn forward(&self, tape: &mut Tape, batch: &AcousticBatch) -> Var {
        let l = &self.layers;
        let mut h = tape.input(batch.x.clone());
        let bias = l.cond.forward(tape, &batch.styles, &batch.speakers);
        for (i, lstm) in l.lstms.iter().enumerate() {
            h = lstm.run(tape, h, batch.batch, (i == 0).then_some(bias));
        }
        l.out.forward(tape, h)
    }

    pub(crate) fn loss(&self, tape: &mut Tape, batch: &AcousticBatch) -> Var {
        let out = self.forward(tape, batch);
        tape.mse(out, batch.targets.clone(), batch.mask.clone())
    }

    pub fn predict(
        &self,
        ling: &LinguisticSequence,
        track: &ProsodyTrack,
        style: &StyleEmbedding,
        speaker: &str,
    ) -> Result<AcousticFrames> {
        if self.strict && !self.trained {
            return Err(Error::Untrained);
        }
        let batch = self.make_batch(&[(ling, track, style, speaker)], None)?;
        let mut tape = Tape::new(&self.params);
        let out = self.forward(&mut tape, &batch);
        let mut m = tape.value(out).clone();
        for r in 0..m.rows {
            self.scaler.inverse(m.row_mut(r));
        }
        AcousticFrames::new(m)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = Meta {
            config: self.config.clone(),
            scaler: self.scaler.clone(),
            f0_scaler: self.f0_scaler.clone(),
            trained: self.trained,
        };
        Ok(Checkpoint { kind: CHECKPOINT_KIND.into(), config: serde_json::to_value(meta)?, tensors: self.params.clone() })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let meta: Meta = serde_json::from_value(ck.config.clone())?;
        let mut m = Self::new(meta.config)?;
        ck.restore_into(&mut m.params)?;
        m.scaler = meta.scaler;
        m.f0_scaler = meta.f0_scaler;
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

pub fn predict_acoustic(
    model: &AcousticModel,
    ling: &LinguisticSequence,
    track: &ProsodyTrack,
    style: &StyleEmbedding,
    speaker: &str,
) -> Result<AcousticFrames> {
    model.predict(ling, track, style, speaker)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_error;
    use crate::tts_engine::frontend::{text_to_linguistic, Lexicon};

    fn small() -> AcousticModel {
        let cfg = AcousticConfig { hidden: 5, layers: 2, speaker_dim: 2, seed: 9, ..Default::default() };
        let mut m = AcousticModel::new(cfg).unwrap();
        m.trained = true;
        m
    }

    fn one_hot(i: usize) -> StyleEmbedding {
        let mut p = [0.01; 6];
        p[i] = 0.95;
        StyleEmbedding::new(p).unwrap()
    }

    fn track_for(ling: &LinguisticSequence, frames_each: usize) -> ProsodyTrack {
        let durations = vec![frames_each; ling.len()];
        let f0 = (0..frames_each * ling.len()).map(|t| if t % 7 < 5 { 150.0 + t as f64 } else { 0.0 }).collect();
        ProsodyTrack::new(durations, f0).unwrap()
    }

    #[test]
    fn output_shape_matches_track() {
        let m = small();
        let ling = text_to_linguistic("hello world", Lexicon::builtin()).unwrap();
        let mut durations = vec![1; ling.len()];
        durations[0] = 100 - (ling.len() - 1);
        let track = ProsodyTrack::new(durations, vec![0.0; 100]).unwrap();
        let out = m.predict(&ling, &track, &one_hot(2), "spk0").unwrap();
        assert_eq!((out.mfcc.rows, out.mfcc.cols), (100, 13));
        assert!(out.mfcc.all_finite());
    }

    #[test]
    fn misaligned_track_is_an_error() {
        let m = small();
        let ling = text_to_linguistic("hello", Lexicon::builtin()).unwrap();
        let bad = ProsodyTrack { durations: vec![2; ling.len() + 1], f0: vec![0.0; 2 * (ling.len() + 1)] };
        assert!(m.predict(&ling, &bad, &one_hot(0), "spk0").is_err());
        let bad = ProsodyTrack { durations: vec![2; ling.len()], f0: vec![0.0; 3] };
        assert!(m.predict(&ling, &bad, &one_hot(0), "spk0").is_err());
    }

    #[test]
    fn untrained_strict_refuses() {
        let mut m = small();
        m.trained = false;
        let ling = text_to_linguistic("hello", Lexicon::builtin()).unwrap();
        assert!(matches!(m.predict(&ling, &track_for(&ling, 2), &one_hot(0), "spk0"), Err(Error::Untrained)));
    }

    #[test]
    fn style_changes_output() {
        let m = small();
        let ling = text_to_linguistic("hello", Lexicon::builtin()).unwrap();
        let tr = track_for(&ling, 3);
        let a = m.predict(&ling, &tr, &one_hot(3), "spk0").unwrap();
        let b = m.predict(&ling, &tr, &one_hot(2), "spk0").unwrap();
        let d: f64 = a.mfcc.data.iter().zip(&b.mfcc.data).map(|(x, y)| (x - y) * (x - y)).sum();
        assert!(d > 0.0);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let m = small();
        let l1 = text_to_linguistic("hi", Lexicon::builtin()).unwrap();
        let l2 = text_to_linguistic("cats", Lexicon::builtin()).unwrap();
        let (t1, t2) = (track_for(&l1, 2), track_for(&l2, 1));
        let g1 = crate::nn::uniform_mat(&mut ChaCha8Rng::seed_from_u64(1), t1.frames(), 13, 1.0);
        let g2 = crate::nn::uniform_mat(&mut ChaCha8Rng::seed_from_u64(2), t2.frames(), 13, 1.0);
        let (s1, s2) = (one_hot(1), one_hot(4));
        let batch = m.make_batch(&[(&l1, &t1, &s1, "spk0"), (&l2, &t2, &s2, "spk0")], Some(&[&g1, &g2])).unwrap();
        let mut tape = Tape::new(&m.params);
        let loss = m.loss(&mut tape, &batch);
        let grads = tape.backward(loss);
        let err = gradient_error(&m.params, &grads, 1e-5, 30, |p| {
            let probe = AcousticModel { params: p.clone(), ..m.clone() };
            let mut t = Tape::new(p);
            let l = probe.loss(&mut t, &batch);
            t.scalar(l)
        });
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = small();
        let back = AcousticModel::from_checkpoint(&Checkpoint::from_bytes(&m.to_checkpoint().unwrap().to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
