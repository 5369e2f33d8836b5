//! A directory holding every model the pipeline needs.
//!
//! ```text
//! pipeline.json        manifest
//! prosody.ckpt acoustic.ckpt [vocoder.ckpt]
//! [classifier.ckpt query_norm.json]
//! [baseline/prosody.ckpt baseline/acoustic.ckpt]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Pipeline, StyleExtractor};
use crate::corpus::{NormMode, NormStats};
use crate::error::{Error, Result};
use crate::style_model::StyleClassifier;
use crate::tts_engine::{TtsEngine, VocoderKind};

pub const MANIFEST_FILE: &str = "pipeline.json";
pub const CLASSIFIER_FILE: &str = "classifier.ckpt";
pub const QUERY_NORM_FILE: &str = "query_norm.json";
pub const BASELINE_DIR: &str = "baseline";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub default_speaker: String,
    pub vocoder: VocoderKind,
    pub norm_mode: NormMode,
    pub feature_rate: Option<u32>,
    pub embeddings: Option<PathBuf>,
    pub has_classifier: bool,
    pub has_query_norm: bool,
    pub has_baseline: bool,
}

impl Pipeline {
    pub fn manifest(&self) -> PipelineManifest {
        let ex = self.extractor.as_ref();
        PipelineManifest {
            default_speaker: self.default_speaker.clone(),
            vocoder: self.engine.vocoder.kind(),
            norm_mode: ex.map_or(NormMode::Both, |e| e.mode),
            feature_rate: ex.and_then(|e| e.rate),
            embeddings: ex.and_then(|e| e.embeddings_path.clone()),
            has_classifier: ex.is_some(),
            has_query_norm: ex.is_some_and(|e| e.stats.is_some()),
            has_baseline: self.baseline.is_some(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.engine.save(dir)?;
        if let Some(ex) = &self.extractor {
            ex.classifier.save(&dir.join(CLASSIFIER_FILE))?;
            if let Some(st) = &ex.stats {
                st.save(&dir.join(QUERY_NORM_FILE))?;
            }
        }
        if let Some(b) = &self.baseline {
            b.save(&dir.join(BASELINE_DIR))?;
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&self.manifest())?).map_err(|e| Error::io(&path, e))
    }

    /// Loads a bundle; `vocoder` overrides the saved choice.
    pub fn load(dir: &Path, vocoder: Option<VocoderKind>) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: PipelineManifest = serde_json::from_str(&text)?;
        let kind = vocoder.unwrap_or(m.vocoder);
        let mut p = Pipeline::new(TtsEngine::load(dir, kind)?);
        p.default_speaker = m.default_speaker;
        if m.has_classifier {
            let classifier = StyleClassifier::load(&dir.join(CLASSIFIER_FILE))?;
            let stats = if m.has_query_norm { Some(NormStats::load(&dir.join(QUERY_NORM_FILE))?) } else { None };
            let mut ex = StyleExtractor::new(classifier, stats, m.norm_mode);
            ex.rate = m.feature_rate;
            if let Some(e) = &m.embeddings {
                ex = ex.with_embeddings(e)?;
            }
            p.extractor = Some(ex);
        }
        if m.has_baseline {
            p.baseline = Some(TtsEngine::load(&dir.join(BASELINE_DIR), VocoderKind::Dsp)?);
        }
        Ok(p)
    }
}
