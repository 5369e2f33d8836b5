//! Soft-labelling a corpus with a trained classifier.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classifier::StyleClassifier;
use super::style_embedding::StyleEmbedding;
use crate::corpus::{Corpus, EmbeddingProvider, FeatureBundle, NormMode, NormStats, StyleLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub embedding: StyleEmbedding,
    pub argmax_label: StyleLabel,
}

#[derive(Debug, Clone, Default)]
pub struct LabelReport {
    pub records: Vec<EmbeddingRecord>,
    /// Utterance id and reason for every skipped utterance.
    pub skipped: Vec<(String, String)>,
}

/// Embeds already-normalized bundles.
pub fn label_bundles(model: &StyleClassifier, bundles: &[FeatureBundle]) -> Result<Vec<EmbeddingRecord>> {
    let mut out = Vec::with_capacity(bundles.len());
    for chunk in bundles.chunks(64) {
        let refs: Vec<&FeatureBundle> = chunk.iter().collect();
        for (b, e) in chunk.iter().zip(model.predict(&refs)?) {
            out.push(EmbeddingRecord { id: b.id.clone(), embedding: e, argmax_label: e.argmax() });
        }
    }
    Ok(out)
}

/// Extracts, normalizes and embeds every utterance; unreadable audio is
/// reported and skipped.
pub fn label_corpus(
    model: &StyleClassifier,
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
    stats: Option<&NormStats>,
    mode: NormMode,
    rate: Option<u32>,
) -> Result<LabelReport> {
    let (bundles, failed) = crate::corpus::extract_corpus(corpus, provider, rate, 1);
    let bundles: Vec<FeatureBundle> = match stats {
        Some(st) => bundles.iter().map(|b| b.normalized(st, mode)).collect(),
        None => bundles,
    };
    Ok(LabelReport {
        records: label_bundles(model, &bundles)?,
        skipped: failed.into_iter().map(|(id, e)| (id, e.to_string())).collect(),
    })
}

pub fn write_embeddings(path: &Path, records: &[EmbeddingRecord]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { path: path.to_path_buf(), line: i + 1, msg };
        let r: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| perr(e.to_string()))?;
        if !r.embedding.is_valid(super::style_embedding::SIMPLEX_TOLERANCE) {
            return Err(perr(format!("embedding for `{}` is not a probability vector", r.id)));
        }
        out.push(r);
    }
    Ok(out)
}
