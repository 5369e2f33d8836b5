//! Training examples for the TTS models: linguistic input, style embedding,
//! per-phoneme duration/F0 targets from a uniform alignment, and frame-level
//! F0 and 13-dim cepstra.

use std::collections::HashMap;

use super::frontend::{text_to_linguistic, Lexicon, LinguisticSequence, PAU};
use super::prosody::{MAX_F0, MIN_F0};
use crate::audio::{Waveform, DEFAULT_RATE};
use crate::corpus::mfcc::{MfccAnalyzer, MfccConfig, N_CEPS};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::nn::Mat;
use crate::pitch::estimate_f0;
use crate::style_model::StyleEmbedding;

#[derive(Debug, Clone, PartialEq)]
pub struct PhoneTargets {
    pub durations: Vec<usize>,
    pub f0_start: Vec<f64>,
    pub f0_end: Vec<f64>,
    pub voiced: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TtsExample {
    pub id: String,
    pub ling: LinguisticSequence,
    pub style: StyleEmbedding,
    pub speaker: String,
    pub targets: PhoneTargets,
    /// Frame-level F0 in Hz, 0 for unvoiced frames.
    pub f0: Vec<f64>,
    /// `T×13` static cepstra.
    pub mfcc: Mat,
}

impl TtsExample {
    pub fn from_audio(
        id: &str,
        wave: &Waveform,
        text: &str,
        style: StyleEmbedding,
        speaker: &str,
        lexicon: &Lexicon,
    ) -> Result<Self> {
        let wave = if wave.rate() == DEFAULT_RATE { wave.clone() } else { wave.resampled(DEFAULT_RATE) };
        let ling = text_to_linguistic(text, lexicon)?;
        let mut mfcc = MfccAnalyzer::new(MfccConfig::default(), DEFAULT_RATE).cepstra(&wave)?;
        let mut f0 = estimate_f0(&wave)?;
        let frames = mfcc.rows.min(f0.len());
        mfcc = mfcc.slice_rows(0, frames);
        f0.truncate(frames);
        for v in f0.iter_mut().filter(|v| **v > 0.0) {
            *v = v.clamp(MIN_F0, MAX_F0);
        }
        let voiced: Vec<bool> = f0.iter().map(|&v| v > 0.0).collect();
        let durations = uniform_alignment(&ling, &voiced)?;
        let (f0_start, f0_end, pv) = phone_f0_targets(&durations, &f0)?;
        Ok(Self {
            id: id.to_string(),
            ling,
            style,
            speaker: speaker.to_string(),
            targets: PhoneTargets { durations, f0_start, f0_end, voiced: pv },
            f0,
            mfcc,
        })
    }

    pub fn frames(&self) -> usize {
        self.f0.len()
    }
}

/// Splits the voiced region uniformly across the non-edge phonemes; the
/// leading and trailing pauses take the frames outside it. Every phoneme
/// gets at least one frame.
pub fn uniform_alignment(ling: &LinguisticSequence, voiced: &[bool]) -> Result<Vec<usize>> {
    let (n, t) = (ling.len(), voiced.len());
    if n == 0 {
        return Err(Error::invalid("empty phoneme sequence"));
    }
    if t < n {
        return Err(Error::invalid(format!("{t} frames cannot hold {n} phonemes")));
    }
    let lead = usize::from(ling.phones[0].id == PAU && n > 1);
    let trail = usize::from(ling.phones[n - 1].id == PAU && n > 1 + lead);
    let inner = n - lead - trail;
    let mut start = voiced.iter().position(|&v| v).unwrap_or(0);
    let mut end = voiced.iter().rposition(|&v| v).map_or(t, |i| i + 1);
    start = if lead == 1 { start.max(1) } else { 0 };
    end = if trail == 1 { end.min(t - 1) } else { t };
    if end <= start || end - start < inner {
        start = lead;
        end = t - trail;
    }
    let span = end - start;
    let mut out = Vec::with_capacity(n);
    if lead == 1 {
        out.push(start);
    }
    let mut prev = start;
    for k in 1..=inner {
        let b = start + (span * k + inner / 2) / inner;
        out.push(b - prev);
        prev = b;
    }
    if trail == 1 {
        out.push(t - end);
    }
    debug_assert_eq!(out.iter().sum::<usize>(), t);
    debug_assert!(out.iter().all(|&d| d >= 1));
    Ok(out)
}

/// Linear interpolation across unvoiced frames; the ends hold the nearest
/// voiced value.
pub fn fill_unvoiced(f0: &[f64]) -> Option<Vec<f64>> {
    let idx: Vec<usize> = (0..f0.len()).filter(|&i| f0[i] > 0.0).collect();
    let (&first, &last) = (idx.first()?, idx.last()?);
    let mut out = f0.to_vec();
    out[..first].fill(f0[first]);
    out[last..].fill(f0[last]);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let x = (i - a) as f64 / (b - a) as f64;
            out[i] = f0[a] + x * (f0[b] - f0[a]);
        }
    }
    Some(out)
}

/// Per-phoneme F0 at the first and last frame of the smoothed contour, and a
/// voiced flag when at least half the phoneme's frames are voiced.
pub fn phone_f0_targets(durations: &[usize], f0: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let filled = fill_unvoiced(f0).ok_or_else(|| Error::invalid("no voiced frames"))?;
    let (mut starts, mut ends, mut voiced) = (Vec::new(), Vec::new(), Vec::new());
    let mut s = 0;
    for &d in durations {
        let e = s + d;
        starts.push(filled[s]);
        ends.push(filled[e - 1]);
        voiced.push(2 * f0[s..e].iter().filter(|&&v| v > 0.0).count() >= d);
        s = e;
    }
    Ok((starts, ends, voiced))
}

/// Builds examples for every utterance of `corpus`. Utterances without an
/// embedding are an error naming them; audio failures are returned with
/// their reasons.
pub fn build_examples(
    corpus: &Corpus,
    embeddings: &HashMap<String, StyleEmbedding>,
    lexicon: &Lexicon,
    workers: usize,
) -> Result<(Vec<TtsExample>, Vec<(String, Error)>)> {
    check_embeddings(corpus, embeddings)?;
    let waves: Vec<Result<Waveform>> = corpus.utterances.iter().map(|u| Waveform::read_wav(&u.audio)).collect();
    Ok(examples_from(items(corpus, waves, embeddings), lexicon, workers))
}

fn check_embeddings(corpus: &Corpus, embeddings: &HashMap<String, StyleEmbedding>) -> Result<()> {
    let missing: Vec<&str> =
        corpus.utterances.iter().filter(|u| !embeddings.contains_key(&u.id)).map(|u| u.id.as_str()).collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!("utterances without a style embedding: {}", missing.join(", "))));
    }
    Ok(())
}

/// Same as [`build_examples`] with audio already in memory, aligned with
/// `corpus.utterances`.
pub fn build_examples_from_waves(
    corpus: &Corpus,
    waves: &[Waveform],
    embeddings: &HashMap<String, StyleEmbedding>,
    lexicon: &Lexicon,
    workers: usize,
) -> Result<(Vec<TtsExample>, Vec<(String, Error)>)> {
    if waves.len() != corpus.len() {
        return Err(Error::invalid(format!("{} waveforms for {} utterances", waves.len(), corpus.len())));
    }
    check_embeddings(corpus, embeddings)?;
    let waves = waves.iter().cloned().map(Ok).collect();
    Ok(examples_from(items(corpus, waves, embeddings), lexicon, workers))
}

fn items(corpus: &Corpus, waves: Vec<Result<Waveform>>, embeddings: &HashMap<String, StyleEmbedding>) -> Vec<Item> {
    corpus
        .utterances
        .iter()
        .zip(waves)
        .map(|(u, w)| (u.id.clone(), w, u.text.clone(), embeddings[&u.id], u.speaker.clone()))
        .collect()
}

type Item = (String, Result<Waveform>, String, StyleEmbedding, String);

/// Parallel extraction over (id, audio, text, style, speaker) tuples.
pub(crate) fn examples_from(items: Vec<Item>, lexicon: &Lexicon, workers: usize) -> (Vec<TtsExample>, Vec<(String, Error)>) {
    let workers = workers.clamp(1, items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    let results: Vec<(String, Result<TtsExample>)> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|(id, w, text, style, spk)| {
                            let r = match w {
                                Ok(w) => TtsExample::from_audio(id, w, text, *style, spk, lexicon),
                                Err(e) => Err(Error::invalid(e.to_string())),
                            };
                            (id.clone(), r)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("example worker panicked")).collect()
    });
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            Ok(e) => ok.push(e),
            Err(e) => failed.push((id, e)),
        }
    }
    (ok, failed)
}

pub const ACOUSTIC_DIM: usize = N_CEPS;

#[cfg(test)]
mod tests {
    use super::*;

    fn ling(text: &str) -> LinguisticSequence {
        text_to_linguistic(text, Lexicon::builtin()).unwrap()
    }

    #[test]
    fn alignment_covers_voiced_region() {
        let l = ling("hello world");
        let n = l.len();
        let mut voiced = vec![false; 100];
        voiced[20..80].fill(true);
        let d = uniform_alignment(&l, &voiced).unwrap();
        assert_eq!(d.len(), n);
        assert_eq!(d.iter().sum::<usize>(), 100);
        assert_eq!(d[0], 20);
        assert_eq!(d[n - 1], 20);
        let inner = &d[1..n - 1];
        let (mn, mx) = (inner.iter().min().unwrap(), inner.iter().max().unwrap());
        assert!(mx - mn <= 1);
    }

    #[test]
    fn alignment_edge_cases() {
        let l = ling("hi");
        let n = l.len();
        let d = uniform_alignment(&l, &vec![true; n]).unwrap();
        assert!(d.iter().all(|&x| x == 1));
        let d = uniform_alignment(&l, &vec![false; 40]).unwrap();
        assert_eq!(d.iter().sum::<usize>(), 40);
        assert!(d.iter().all(|&x| x >= 1));
        assert!(uniform_alignment(&l, &vec![true; n - 1]).is_err());
    }

    #[test]
    fn interpolation_and_phone_targets() {
        let f0 = [0.0, 100.0, 0.0, 0.0, 160.0, 0.0];
        let filled = fill_unvoiced(&f0).unwrap();
        assert_eq!(filled, vec![100.0, 100.0, 120.0, 140.0, 160.0, 160.0]);
        let (s, e, v) = phone_f0_targets(&[2, 3, 1], &f0).unwrap();
        assert_eq!(s, vec![100.0, 120.0, 160.0]);
        assert_eq!(e, vec![100.0, 160.0, 160.0]);
        assert_eq!(v, vec![true, false, false]);
        assert!(fill_unvoiced(&[0.0; 4]).is_none());
    }

    #[test]
    fn missing_embedding_names_utterance() {
        use crate::corpus::{Split, Utterance};
        let u = |id: &str| Utterance {
            id: id.into(),
            audio: "x.wav".into(),
            text: "hi".into(),
            speaker: "s".into(),
            raw_style: None,
            style: None,
            corpus: "c".into(),
            split: Split::Train,
        };
        let corpus = Corpus::new(vec![u("a"), u("b")]).unwrap();
        let mut emb = HashMap::new();
        emb.insert("a".to_string(), StyleEmbedding::new([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
        let err = build_examples(&corpus, &emb, Lexicon::builtin(), 1).unwrap_err().to_string();
        assert!(err.contains('b') && err.contains("without a style embedding"));
    }
}
