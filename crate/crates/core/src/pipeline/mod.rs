//! Closed-loop orchestration: build or extract a style embedding, then drive
//! the TTS engine with it.

pub mod bundle;
pub mod style;
pub mod synthetic;

use std::path::{Path, PathBuf};

use crate::audio::Waveform;
use crate::corpus::{EmbeddingProvider, FeatureBundle, HashEmbeddings, NormMode, NormStats, TableEmbeddings};
use crate::error::{Error, Result};
use crate::style_model::style_embedding::SIMPLEX_TOLERANCE;
use crate::style_model::{StyleClassifier, StyleEmbedding};
use crate::tts_engine::{Synthesis, TtsEngine};

pub use bundle::{PipelineManifest, BASELINE_DIR, CLASSIFIER_FILE, MANIFEST_FILE, QUERY_NORM_FILE};
pub use synthetic::{train_synthetic_pipeline, SyntheticPipeline, SyntheticPipelineConfig};
pub use style::{make_style_embedding, mix_style_embedding, one_hot_embedding, parse_style_weights};

/// Classifier plus the feature settings used on incoming queries.
pub struct StyleExtractor {
    pub classifier: StyleClassifier,
    /// Stats of the query calibration corpus; `None` skips normalization.
    pub stats: Option<NormStats>,
    pub mode: NormMode,
    /// Rate features are computed at; `None` keeps the query's own rate.
    pub rate: Option<u32>,
    /// Word-vector table the provider was loaded from, if any.
    pub embeddings_path: Option<PathBuf>,
    provider: Box<dyn EmbeddingProvider>,
}

impl std::fmt::Debug for StyleExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StyleExtractor")
            .field("mode", &self.mode)
            .field("rate", &self.rate)
            .field("embeddings_path", &self.embeddings_path)
            .finish_non_exhaustive()
    }
}

impl StyleExtractor {
    /// Uses hashed word vectors.
    pub fn new(classifier: StyleClassifier, stats: Option<NormStats>, mode: NormMode) -> Self {
        Self { classifier, stats, mode, rate: None, embeddings_path: None, provider: Box::new(HashEmbeddings::default()) }
    }

    pub fn with_embeddings(mut self, path: &Path) -> Result<Self> {
        self.provider = Box::new(TableEmbeddings::load(path)?);
        self.embeddings_path = Some(path.to_path_buf());
        Ok(self)
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    /// Feature extraction, normalization and a forward pass.
    pub fn extract(&self, audio: &Waveform, transcript: &str) -> Result<StyleEmbedding> {
        let bundle = FeatureBundle::from_audio("query", audio, transcript, self.provider.as_ref(), self.rate)
            .map_err(|e| e.at_stage("query features"))?;
        let bundle = match &self.stats {
            Some(st) => bundle.normalized(st, self.mode),
            None => bundle,
        };
        self.classifier.embed(&bundle)
    }

    pub fn extract_file(&self, path: &Path, transcript: &str) -> Result<StyleEmbedding> {
        self.extract(&Waveform::read_wav(path)?, transcript)
    }
}

pub fn extract_query_style(extractor: &StyleExtractor, audio: &Waveform, transcript: &str) -> Result<StyleEmbedding> {
    extractor.extract(audio, transcript)
}

#[derive(Debug, Clone)]
pub struct Query {
    pub audio: Waveform,
    pub transcript: String,
}

/// Text plus exactly one style source.
#[derive(Debug, Clone, Default)]
pub struct SynthesisRequest {
    pub text: String,
    pub embedding: Option<StyleEmbedding>,
    pub named: Option<String>,
    pub query: Option<Query>,
    /// Falls back to the pipeline's default speaker.
    pub speaker: Option<String>,
}

impl SynthesisRequest {
    pub fn with_embedding(text: &str, e: StyleEmbedding) -> Self {
        Self { text: text.into(), embedding: Some(e), ..Default::default() }
    }

    pub fn named(text: &str, style: &str) -> Self {
        Self { text: text.into(), named: Some(style.into()), ..Default::default() }
    }

    pub fn from_query(text: &str, audio: Waveform, transcript: &str) -> Self {
        Self { text: text.into(), query: Some(Query { audio, transcript: transcript.into() }), ..Default::default() }
    }

    /// Checks the text and that exactly one style source is set.
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::invalid("text is empty"));
        }
        let n = [self.embedding.is_some(), self.named.is_some(), self.query.is_some()].iter().filter(|&&b| b).count();
        match n {
            0 => Err(Error::invalid("no style source given (embedding, named style or query)")),
            1 => Ok(()),
            _ => Err(Error::invalid("ambiguous style source: give exactly one of embedding, named style or query")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Response {
    pub synthesis: Synthesis,
    /// The embedding the audio was conditioned on.
    pub embedding: StyleEmbedding,
}

impl Response {
    pub fn wave(&self) -> &Waveform {
        &self.synthesis.wave
    }
}

#[derive(Debug)]
pub struct Pipeline {
    pub engine: TtsEngine,
    pub extractor: Option<StyleExtractor>,
    /// Same architecture trained with the style input zeroed.
    pub baseline: Option<TtsEngine>,
    pub default_speaker: String,
}

impl Pipeline {
    pub fn new(engine: TtsEngine) -> Self {
        let default_speaker = engine.prosody.config.speakers.first().cloned().unwrap_or_default();
        Self { engine, extractor: None, baseline: None, default_speaker }
    }

    pub fn extract_query_style(&self, audio: &Waveform, transcript: &str) -> Result<StyleEmbedding> {
        self.extractor
            .as_ref()
            .ok_or_else(|| Error::invalid("no style classifier loaded for query extraction"))?
            .extract(audio, transcript)
    }

    /// Turns the request's style source into an embedding on the simplex.
    pub fn resolve_style(&self, req: &SynthesisRequest) -> Result<StyleEmbedding> {
        req.validate()?;
        if let Some(e) = &req.embedding {
            return StyleEmbedding::new(e.0);
        }
        if let Some(name) = &req.named {
            return make_style_embedding(name);
        }
        let q = req.query.as_ref().expect("validated");
        self.extract_query_style(&q.audio, &q.transcript)
    }

    pub fn synthesize(&self, req: &SynthesisRequest) -> Result<Response> {
        let embedding = self.resolve_style(req)?;
        debug_assert!(embedding.is_valid(SIMPLEX_TOLERANCE));
        let speaker = req.speaker.as_deref().unwrap_or(&self.default_speaker);
        let synthesis = self.engine.synthesize(&req.text, &embedding, speaker)?;
        Ok(Response { synthesis, embedding })
    }

    /// Conditions the response on the style extracted from the query.
    pub fn respond(&self, query_audio: &Waveform, query_text: &str, response_text: &str, speaker: Option<&str>) -> Result<Response> {
        if response_text.trim().is_empty() {
            return Err(Error::invalid("response text is empty"));
        }
        let embedding = self.extract_query_style(query_audio, query_text)?;
        let req = SynthesisRequest { speaker: speaker.map(str::to_owned), ..SynthesisRequest::with_embedding(response_text, embedding) };
        self.synthesize(&req)
    }

    /// Synthesis with the style-free comparator models.
    pub fn synthesize_baseline(&self, text: &str, speaker: Option<&str>) -> Result<Synthesis> {
        let engine = self.baseline.as_ref().ok_or_else(|| Error::invalid("no baseline models loaded"))?;
        let uniform = StyleEmbedding([1.0 / 6.0; 6]);
        engine.synthesize(text, &uniform, speaker.unwrap_or(&self.default_speaker))
    }
}
