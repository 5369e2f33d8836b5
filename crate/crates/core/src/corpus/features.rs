//! Per-utterance feature bundles: MFCC frames, prosody vector and token
//! embeddings.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embedding::{tokenize, EmbeddingProvider};
use super::manifest::{Corpus, Split, Utterance};
use super::mfcc::{extract_mfcc, MFCC_DIM};
use super::normalize::{NormMode, NormStats};
use super::prosody::{extract_prosody_with_tokens, PROSODY_DIM};
use super::StyleLabel;
use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::nn::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub id: String,
    pub mfcc: Mat,
    pub prosody: Vec<f64>,
    pub tokens: Vec<String>,
    pub token_embeddings: Mat,
    pub style: Option<StyleLabel>,
    pub corpus: String,
    pub split: Split,
}

impl FeatureBundle {
    /// Extracts features from a waveform already in memory.
    pub fn from_audio(
        id: &str,
        wave: &Waveform,
        text: &str,
        provider: &dyn EmbeddingProvider,
        rate: Option<u32>,
    ) -> Result<Self> {
        let wave = match rate {
            Some(r) if r != wave.rate() => wave.resampled(r),
            _ => wave.clone(),
        };
        let tokens = tokenize(text);
        let b = Self {
            id: id.to_string(),
            mfcc: extract_mfcc(&wave)?,
            prosody: extract_prosody_with_tokens(&wave, tokens.len())?,
            token_embeddings: provider.embed_text(text),
            tokens,
            style: None,
            corpus: String::new(),
            split: Split::Train,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_utterance(u: &Utterance, provider: &dyn EmbeddingProvider, rate: Option<u32>) -> Result<Self> {
        let wave = Waveform::read_wav(&u.audio)?;
        let mut b = Self::from_audio(&u.id, &wave, &u.text, provider, rate)?;
        b.style = u.style;
        b.corpus = u.corpus.clone();
        b.split = u.split;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mfcc.cols != MFCC_DIM {
            return Err(Error::Shape(format!("{}: MFCC width {}", self.id, self.mfcc.cols)));
        }
        if self.prosody.len() != PROSODY_DIM {
            return Err(Error::Shape(format!("{}: prosody length {}", self.id, self.prosody.len())));
        }
        if self.token_embeddings.rows != self.tokens.len() {
            return Err(Error::Shape(format!(
                "{}: {} embedding rows for {} tokens",
                self.id,
                self.token_embeddings.rows,
                self.tokens.len()
            )));
        }
        if !self.mfcc.all_finite() || !self.token_embeddings.all_finite() || self.prosody.iter().any(|v| !v.is_finite())
        {
            return Err(Error::invalid(format!("{}: non-finite feature values", self.id)));
        }
        Ok(())
    }

    /// Copy with the selected streams z-scored.
    pub fn normalized(&self, stats: &NormStats, mode: NormMode) -> Self {
        let (mfcc, prosody) = stats.apply(mode, &self.mfcc, &self.prosody);
        Self { mfcc, prosody, ..self.clone() }
    }
}

/// Extracts every utterance of a corpus. Utterances whose audio cannot be
/// read or analysed are returned separately with the reason.
pub fn extract_corpus(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    rate: Option<u32>,
    workers: usize,
) -> (Vec<FeatureBundle>, Vec<(String, Error)>) {
    let utts = &corpus.utterances;
    let workers = workers.clamp(1, utts.len().max(1));
    let chunk = utts.len().div_ceil(workers).max(1);
    let results: Vec<Vec<Result<FeatureBundle>>> = std::thread::scope(|s| {
        let handles: Vec<_> = utts
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|u| FeatureBundle::from_utterance(u, provider, rate)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("feature worker panicked")).collect()
    });
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (u, r) in utts.iter().zip(results.into_iter().flatten()) {
        match r {
            Ok(b) => ok.push(b),
            Err(e) => failed.push((u.id.clone(), e)),
        }
    }
    (ok, failed)
}

/// Fits normalization statistics on bundles from one corpus.
pub fn fit_normalizer(corpus_id: &str, bundles: &[FeatureBundle]) -> Result<NormStats> {
    let m: Vec<&Mat> = bundles.iter().map(|b| &b.mfcc).collect();
    let p: Vec<&[f64]> = bundles.iter().map(|b| b.prosody.as_slice()).collect();
    NormStats::fit(corpus_id, &m, &p)
}

/// Writes bundles as JSON lines.
pub fn save_features(path: &Path, bundles: &[FeatureBundle]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for b in bundles {
        serde_json::to_writer(&mut w, b)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path) -> Result<Vec<FeatureBundle>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let b: FeatureBundle = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, msg: e.to_string() })?;
        b.validate()?;
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::embedding::HashEmbeddings;

    fn tone() -> Waveform {
        Waveform::from_f64(
            &(0..12_000).map(|i| 0.3 * (2.0 * std::f64::consts::PI * 180.0 * i as f64 / 24_000.0).sin()).collect::<Vec<_>>(),
            24_000,
        )
    }

    #[test]
    fn bundle_shapes() {
        let b = FeatureBundle::from_audio("u", &tone(), "hello world", &HashEmbeddings::default(), None).unwrap();
        assert_eq!(b.mfcc.cols, 39);
        assert_eq!(b.prosody.len(), 35);
        assert_eq!(b.token_embeddings.rows, 2);
        assert_eq!(b.token_embeddings.cols, 300);
        assert_eq!(b.token_embeddings.row(0).len(), 300);
    }

    #[test]
    fn resampling_applies() {
        let b = FeatureBundle::from_audio("u", &tone(), "x", &HashEmbeddings::default(), Some(16_000)).unwrap();
        assert!((46..=51).contains(&b.mfcc.rows));
    }

    #[test]
    fn save_load_round_trip() {
        let b = FeatureBundle::from_audio("u", &tone(), "a b", &HashEmbeddings::default(), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.jsonl");
        save_features(&p, &[b.clone(), b.clone()]).unwrap();
        let back = load_features(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], b);
    }
}
