//! Pre-synthesized listening-test pools.
//!
//! ```text
//! pool/media/<opaque id>.wav
//! pool/abx.jsonl pool/preference.jsonl pool/query_match.jsonl
//! ```
//!
//! Stimulus file names carry no style information.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::abx::{build_abx, AbxItem};
use super::preference::{build_preference, PreferenceItem, PreferencePlan};
use super::query_match::QueryMatchItem;
use super::report::write_jsonl;
use crate::audio::Waveform;
use crate::corpus::StyleLabel;
use crate::error::{Error, Result};
use crate::pipeline::{one_hot_embedding, Pipeline, SynthesisRequest};

pub const MEDIA_DIR: &str = "media";
pub const ABX_FILE: &str = "abx.jsonl";
pub const PREFERENCE_FILE: &str = "preference.jsonl";
pub const QUERY_MATCH_FILE: &str = "query_match.jsonl";

/// Emotionally neutral sentences for ABX stimuli.
pub const NEUTRAL_TEXTS: [&str; 6] = [
    "the meeting is at ten",
    "we will look at it tomorrow",
    "the book is in the car",
    "they went home at nine",
    "please open the door",
    "the road to the city is open",
];

/// Writes stimuli under `media/` with random, collision-free names.
pub struct MediaWriter {
    dir: PathBuf,
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl MediaWriter {
    pub fn new(pool_dir: &Path, seed: u64) -> Result<Self> {
        let dir = pool_dir.join(MEDIA_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir, rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f11e), used: HashSet::new() })
    }

    /// Returns the file name relative to `media/`.
    pub fn write(&mut self, wave: &Waveform) -> Result<String> {
        let name = loop {
            let n = format!("{:016x}.wav", self.rng.random::<u64>());
            if self.used.insert(n.clone()) {
                break n;
            }
        };
        wave.write_wav(&self.dir.join(&name))?;
        Ok(name)
    }
}

#[derive(Debug, Clone)]
pub struct QueryInput {
    pub audio: Waveform,
    pub transcript: String,
    pub response_text: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoolSummary {
    pub abx: usize,
    pub preference: usize,
    pub query_match: usize,
    pub media_files: usize,
}

/// Synthesizes `per_style` samples of each style (texts cycle through
/// `texts`) and builds the ABX items.
pub fn build_abx_pool(
    pipeline: &Pipeline,
    media: &mut MediaWriter,
    styles: &[StyleLabel],
    texts: &[&str],
    per_style: usize,
    seed: u64,
) -> Result<Vec<AbxItem>> {
    if texts.is_empty() {
        return Err(Error::invalid("no texts for ABX stimuli"));
    }
    let mut pool: BTreeMap<StyleLabel, Vec<String>> = BTreeMap::new();
    for &s in styles {
        for k in 0..per_style {
            let req = SynthesisRequest::with_embedding(texts[k % texts.len()], one_hot_embedding(s));
            let r = pipeline.synthesize(&req)?;
            pool.entry(s).or_default().push(media.write(r.wave())?);
        }
    }
    build_abx(styles, &pool, seed)
}

pub fn build_preference_pool(
    pipeline: &Pipeline,
    media: &mut MediaWriter,
    plans: &[PreferencePlan],
    seed: u64,
) -> Result<Vec<PreferenceItem>> {
    let mut files = Vec::with_capacity(plans.len());
    for p in plans {
        let base = pipeline.synthesize_baseline(&p.text, None)?;
        let styled = pipeline.synthesize(&SynthesisRequest::with_embedding(&p.text, p.embedding))?;
        files.push((media.write(&base.wave)?, media.write(styled.wave())?));
    }
    build_preference(plans, seed, |i, is_base| if is_base { files[i].0.clone() } else { files[i].1.clone() })
}

pub fn build_query_pool(pipeline: &Pipeline, media: &mut MediaWriter, queries: &[QueryInput]) -> Result<Vec<QueryMatchItem>> {
    queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let r = pipeline.respond(&q.audio, &q.transcript, &q.response_text, None)?;
            Ok(QueryMatchItem {
                id: format!("query-{i:03}"),
                query_text: q.transcript.clone(),
                response_text: q.response_text.clone(),
                query_audio: media.write(&q.audio)?,
                response_audio: media.write(r.wave())?,
                embedding: r.embedding,
            })
        })
        .collect()
}

/// Writes whichever item lists are non-empty into `pool_dir`.
pub fn write_pool(pool_dir: &Path, abx: &[AbxItem], preference: &[PreferenceItem], query: &[QueryMatchItem]) -> Result<PoolSummary> {
    fs::create_dir_all(pool_dir).map_err(|e| Error::io(pool_dir, e))?;
    if !abx.is_empty() {
        write_jsonl(&pool_dir.join(ABX_FILE), abx)?;
    }
    if !preference.is_empty() {
        write_jsonl(&pool_dir.join(PREFERENCE_FILE), preference)?;
    }
    if !query.is_empty() {
        write_jsonl(&pool_dir.join(QUERY_MATCH_FILE), query)?;
    }
    let media_dir = pool_dir.join(MEDIA_DIR);
    let media_files = match fs::read_dir(&media_dir) {
        Ok(rd) => rd.filter_map(|e| e.ok()).filter(|e| e.path().extension().is_some_and(|x| x == "wav")).count(),
        Err(_) => 0,
    };
    Ok(PoolSummary { abx: abx.len(), preference: preference.len(), query_match: query.len(), media_files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn media_names_are_unique_and_opaque() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = MediaWriter::new(dir.path(), 1).unwrap();
        let w = Waveform::new(vec![0.0; 10], 24_000);
        let names: HashSet<String> = (0..50).map(|_| m.write(&w).unwrap()).collect();
        assert_eq!(names.len(), 50);
        assert!(names.iter().all(|n| n.len() == 20 && StyleLabel::ALL.iter().all(|s| !n.contains(s.name()))));
        assert_eq!(write_pool(dir.path(), &[], &[], &[]).unwrap().media_files, 50);
    }
}
