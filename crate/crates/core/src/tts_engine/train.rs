//! Mean-squared-error training of the prosody and acoustic models.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acoustic::AcousticModel;
use super::data::TtsExample;
use super::prosody::{ProsodyModel, ProsodyTrack};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, gradient_error, Adam, Mat, Params, Tape};
use crate::style_model::style_embedding::SIMPLEX_TOLERANCE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TtsTrainConfig {
    pub epochs: usize,
    /// Acoustic-model epochs; defaults to `epochs`.
    pub acoustic_epochs: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub train_prosody: bool,
    pub train_acoustic: bool,
}

impl Default for TtsTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            acoustic_epochs: None,
            batch_size: 16,
            lr: 1e-3,
            clip_norm: 5.0,
            seed: 0,
            train_prosody: true,
            train_acoustic: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtsEpochRecord {
    pub epoch: usize,
    pub prosody_loss: Option<f64>,
    pub acoustic_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TtsTrainOutcome {
    pub prosody: ProsodyModel,
    pub acoustic: AcousticModel,
    pub history: Vec<TtsEpochRecord>,
}

pub fn tts_history_csv(history: &[TtsEpochRecord]) -> String {
    let mut s = String::from("epoch,prosody_loss,acoustic_loss\n");
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in history {
        let _ = writeln!(s, "{},{},{}", r.epoch, f(r.prosody_loss), f(r.acoustic_loss));
    }
    s
}

/// Shuffled minibatch loop; `step` returns the batch loss and gradients.
fn fit(
    params: &mut Params,
    n: usize,
    epochs: usize,
    cfg: &TtsTrainConfig,
    seed: u64,
    step: impl Fn(&Params, &[usize]) -> Result<(f64, Vec<Mat>)>,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(params, cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let (loss, mut grads) = step(params, chunk)?;
            if !loss.is_finite() {
                return Err(Error::invalid("training diverged (non-finite loss)"));
            }
            total += loss * chunk.len() as f64;
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam.step(params, &grads);
        }
        history.push(total / n as f64);
    }
    Ok(history)
}

fn check_examples(examples: &[TtsExample], prosody: &ProsodyModel, acoustic: &AcousticModel) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::invalid("no training examples"));
    }
    for e in examples {
        if !e.style.is_valid(SIMPLEX_TOLERANCE) {
            return Err(Error::invalid(format!("{}: style embedding is not a probability vector", e.id)));
        }
        for speakers in [&prosody.config.speakers, &acoustic.config.speakers] {
            if !speakers.contains(&e.speaker) {
                return Err(Error::invalid(format!("{}: speaker `{}` unknown to the model", e.id, e.speaker)));
            }
        }
    }
    Ok(())
}

fn train_prosody(model: &mut ProsodyModel, examples: &[TtsExample], cfg: &TtsTrainConfig) -> Result<Vec<f64>> {
    model.fit_scaler(examples);
    // The tape reads weights from `params`; the clone only supplies layout and scalers.
    let frozen = model.clone();
    let history = fit(&mut model.params, examples.len(), cfg.epochs, cfg, cfg.seed, |params, idx| {
        let items: Vec<_> = idx.iter().map(|&i| (&examples[i].ling, &examples[i].style, examples[i].speaker.as_str())).collect();
        let refs: Vec<&TtsExample> = idx.iter().map(|&i| &examples[i]).collect();
        let batch = frozen.make_batch(&items, Some(&refs))?;
        let mut tape = Tape::new(params);
        let loss = frozen.loss(&mut tape, &batch);
        Ok((tape.scalar(loss), tape.backward(loss)))
    })?;
    model.trained = true;
    Ok(history)
}

fn train_acoustic(model: &mut AcousticModel, examples: &[TtsExample], cfg: &TtsTrainConfig) -> Result<Vec<f64>> {
    model.fit_scalers(examples);
    let tracks = examples
        .iter()
        .map(|e| ProsodyTrack::new(e.targets.durations.clone(), e.f0.clone()))
        .collect::<Result<Vec<_>>>()?;
    let frozen = model.clone();
    let epochs = cfg.acoustic_epochs.unwrap_or(cfg.epochs);
    let history = fit(&mut model.params, examples.len(), epochs, cfg, cfg.seed.wrapping_add(1), |params, idx| {
        let items: Vec<_> = idx
            .iter()
            .map(|&i| (&examples[i].ling, &tracks[i], &examples[i].style, examples[i].speaker.as_str()))
            .collect();
        let targets: Vec<&Mat> = idx.iter().map(|&i| &examples[i].mfcc).collect();
        let batch = frozen.make_batch(&items, Some(&targets))?;
        let mut tape = Tape::new(params);
        let loss = frozen.loss(&mut tape, &batch);
        Ok((tape.scalar(loss), tape.backward(loss)))
    })?;
    model.trained = true;
    Ok(history)
}

/// Trains both models (concurrently when both are selected). Results are
/// deterministic given the seed.
pub fn train_tts(
    mut prosody: ProsodyModel,
    mut acoustic: AcousticModel,
    examples: &[TtsExample],
    cfg: &TtsTrainConfig,
) -> Result<TtsTrainOutcome> {
    check_examples(examples, &prosody, &acoustic)?;
    let (ph, ah) = std::thread::scope(|s| {
        let p = cfg.train_prosody.then(|| s.spawn(|| train_prosody(&mut prosody, examples, cfg)));
        let a = if cfg.train_acoustic { Some(train_acoustic(&mut acoustic, examples, cfg)) } else { None };
        let p = p.map(|h| h.join().expect("prosody training panicked"));
        (p, a)
    });
    let ph = ph.transpose()?;
    let ah = ah.transpose()?;
    let epochs = ph.as_ref().map_or(0, Vec::len).max(ah.as_ref().map_or(0, Vec::len));
    let history = (0..epochs)
        .map(|i| TtsEpochRecord {
            epoch: i + 1,
            prosody_loss: ph.as_ref().and_then(|h| h.get(i).copied()),
            acoustic_loss: ah.as_ref().and_then(|h| h.get(i).copied()),
        })
        .collect();
    Ok(TtsTrainOutcome { prosody, acoustic, history })
}

/// Relative error between the prosody loss gradient and central
/// differences, over at most `per_tensor` entries of each weight tensor.
pub fn prosody_gradient_error(model: &ProsodyModel, examples: &[TtsExample], h: f64, per_tensor: usize) -> Result<f64> {
    let items: Vec<_> = examples.iter().map(|e| (&e.ling, &e.style, e.speaker.as_str())).collect();
    let refs: Vec<&TtsExample> = examples.iter().collect();
    let batch = model.make_batch(&items, Some(&refs))?;
    let mut tape = Tape::new(&model.params);
    let loss = model.loss(&mut tape, &batch);
    let grads = tape.backward(loss);
    Ok(gradient_error(&model.params, &grads, h, per_tensor, |p| {
        let mut t = Tape::new(p);
        let l = model.loss(&mut t, &batch);
        t.scalar(l)
    }))
}

/// Same check for the acoustic model, driven by the examples' own tracks.
pub fn acoustic_gradient_error(model: &AcousticModel, examples: &[TtsExample], h: f64, per_tensor: usize) -> Result<f64> {
    let tracks = examples
        .iter()
        .map(|e| ProsodyTrack::new(e.targets.durations.clone(), e.f0.clone()))
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<_> =
        examples.iter().zip(&tracks).map(|(e, t)| (&e.ling, t, &e.style, e.speaker.as_str())).collect();
    let targets: Vec<&Mat> = examples.iter().map(|e| &e.mfcc).collect();
    let batch = model.make_batch(&items, Some(&targets))?;
    let mut tape = Tape::new(&model.params);
    let loss = model.loss(&mut tape, &batch);
    let grads = tape.backward(loss);
    Ok(gradient_error(&model.params, &grads, h, per_tensor, |p| {
        let mut t = Tape::new(p);
        let l = model.loss(&mut t, &batch);
        t.scalar(l)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tts_engine::acoustic::AcousticConfig;
    use crate::tts_engine::data::PhoneTargets;
    use crate::tts_engine::frontend::{text_to_linguistic, Lexicon};
    use crate::tts_engine::prosody::ProsodyConfig;
    use crate::style_model::StyleEmbedding;

    fn example(text: &str, level: f64, style: usize) -> TtsExample {
        let ling = text_to_linguistic(text, Lexicon::builtin()).unwrap();
        let n = ling.len();
        let durations = vec![3; n];
        let mut p = [0.01; 6];
        p[style] = 0.95;
        let f0: Vec<f64> = (0..3 * n).map(|t| if t % 3 == 0 { 0.0 } else { level }).collect();
        TtsExample {
            id: text.into(),
            targets: PhoneTargets { durations, f0_start: vec![level; n], f0_end: vec![level; n], voiced: vec![true; n] },
            ling,
            style: StyleEmbedding::new(p).unwrap(),
            speaker: "spk0".into(),
            mfcc: Mat::from_vec(3 * n, 13, (0..39 * n).map(|i| (i as f64 * 0.1).sin()).collect()),
            f0,
        }
    }

    fn models() -> (ProsodyModel, AcousticModel) {
        (
            ProsodyModel::new(ProsodyConfig { hidden: 8, out_hidden: 6, speaker_dim: 2, ..Default::default() }).unwrap(),
            AcousticModel::new(AcousticConfig { hidden: 8, speaker_dim: 2, ..Default::default() }).unwrap(),
        )
    }

    #[test]
    fn losses_fall_and_runs_repeat() {
        let ex = vec![example("hi there", 220.0, 3), example("hi there", 180.0, 2), example("the cat", 200.0, 0)];
        let cfg = TtsTrainConfig { epochs: 40, batch_size: 2, lr: 1e-2, ..Default::default() };
        let (p, a) = models();
        let out = train_tts(p.clone(), a.clone(), &ex, &cfg).unwrap();
        let h = &out.history;
        assert_eq!(h.len(), 40);
        assert!(h[39].prosody_loss.unwrap() < 0.5 * h[0].prosody_loss.unwrap());
        assert!(h[39].acoustic_loss.unwrap() < h[0].acoustic_loss.unwrap());
        assert!(out.prosody.trained && out.acoustic.trained);
        let again = train_tts(p, a, &ex, &cfg).unwrap();
        assert_eq!(again.history, out.history);
        assert_eq!(again.prosody, out.prosody);
    }

    #[test]
    fn unknown_speaker_rejected() {
        let mut e = example("hi", 200.0, 1);
        e.speaker = "other".into();
        let (p, a) = models();
        let err = train_tts(p, a, &[e], &TtsTrainConfig { epochs: 1, ..Default::default() }).unwrap_err();
        assert!(err.to_string().contains("other"));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let h = [TtsEpochRecord { epoch: 1, prosody_loss: Some(0.5), acoustic_loss: None }];
        assert_eq!(tts_history_csv(&h), "epoch,prosody_loss,acoustic_loss\n1,0.5,\n");
    }
}
