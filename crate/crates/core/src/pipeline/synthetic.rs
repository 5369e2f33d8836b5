//! End-to-end training on the synthetic corpus: classifier, soft labels,
//! TTS models and optionally the style-free baseline.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Pipeline, StyleExtractor};
use crate::corpus::{fit_normalizer, generate_synthetic_corpus, HashEmbeddings, NormMode, Split, SyntheticConfig};
use crate::error::{Error, Result};
use crate::style_model::{label_bundles, train_classifier, ClassifierConfig, StyleClassifier, StyleEmbedding, TrainConfig};
use crate::tts_engine::{
    build_examples_from_waves, train_tts, AcousticConfig, AcousticModel, Lexicon, ProsodyConfig, ProsodyModel, TtsEngine,
    TtsEpochRecord, TtsTrainConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPipelineConfig {
    pub corpus: SyntheticConfig,
    pub classifier: ClassifierConfig,
    pub classifier_train: TrainConfig,
    pub prosody: ProsodyConfig,
    pub acoustic: AcousticConfig,
    pub tts_train: TtsTrainConfig,
    pub norm_mode: NormMode,
    pub baseline: bool,
}

impl SyntheticPipelineConfig {
    /// Six styles, 256-unit prosody model and a reduced acoustic model.
    pub fn standard(per_class: usize, seed: u64) -> Self {
        let mut corpus = SyntheticConfig::all_styles(per_class, seed);
        corpus.dev_fraction = 1.0 / 3.0;
        Self {
            corpus,
            classifier: ClassifierConfig { seed, ..Default::default() },
            classifier_train: TrainConfig { epochs: 4, patience: 1000, seed, ..Default::default() },
            prosody: ProsodyConfig { seed, ..Default::default() },
            acoustic: AcousticConfig { hidden: 64, seed, ..Default::default() },
            tts_train: TtsTrainConfig { epochs: 30, acoustic_epochs: Some(10), lr: 2e-3, seed, ..Default::default() },
            norm_mode: NormMode::Both,
            baseline: false,
        }
    }

    /// Very small models for plumbing tests.
    pub fn tiny(seed: u64) -> Self {
        let mut c = Self::standard(2, seed);
        c.corpus.dev_fraction = 0.0;
        c.classifier = ClassifierConfig { audio_hidden: 8, text_hidden: 8, audio_dense: 8, frame_stride: 4, seed, ..Default::default() };
        c.classifier_train.epochs = 1;
        c.prosody = ProsodyConfig { hidden: 8, out_hidden: 8, speaker_dim: 2, seed, ..Default::default() };
        c.acoustic = AcousticConfig { hidden: 8, speaker_dim: 2, seed, ..Default::default() };
        c.tts_train = TtsTrainConfig { epochs: 2, acoustic_epochs: Some(1), seed, ..Default::default() };
        c
    }
}

#[derive(Debug)]
pub struct SyntheticPipeline {
    pub pipeline: Pipeline,
    pub embeddings: HashMap<String, StyleEmbedding>,
    pub history: Vec<TtsEpochRecord>,
}

pub fn train_synthetic_pipeline(cfg: &SyntheticPipelineConfig) -> Result<SyntheticPipeline> {
    let sc = generate_synthetic_corpus(&cfg.corpus)?;
    let provider = HashEmbeddings::default();
    let raw = sc.features(&provider)?;
    let stats = fit_normalizer(&cfg.corpus.corpus_id, &raw)?;
    let feats: Vec<_> = raw.iter().map(|b| b.normalized(&stats, cfg.norm_mode)).collect();
    let train: Vec<_> = feats.iter().filter(|b| b.split == Split::Train).cloned().collect();
    let dev: Vec<_> = feats.iter().filter(|b| b.split == Split::Dev).cloned().collect();
    let classifier = train_classifier(StyleClassifier::new(cfg.classifier.clone())?, &train, &dev, &cfg.classifier_train)?.model;

    let embeddings: HashMap<String, StyleEmbedding> =
        label_bundles(&classifier, &feats)?.into_iter().map(|r| (r.id, r.embedding)).collect();
    let (examples, failed) = build_examples_from_waves(&sc.corpus, &sc.waves, &embeddings, Lexicon::builtin(), 1)?;
    if let Some((id, e)) = failed.first() {
        return Err(Error::invalid(format!("{id}: {e}")));
    }
    let out = train_tts(ProsodyModel::new(cfg.prosody.clone())?, AcousticModel::new(cfg.acoustic.clone())?, &examples, &cfg.tts_train)?;
    let mut pipeline = Pipeline::new(TtsEngine::new(out.prosody, out.acoustic));
    pipeline.extractor = Some(StyleExtractor::new(classifier, Some(stats), cfg.norm_mode));
    if cfg.baseline {
        let p = ProsodyModel::new(ProsodyConfig { zero_style: true, ..cfg.prosody.clone() })?;
        let a = AcousticModel::new(AcousticConfig { zero_style: true, ..cfg.acoustic.clone() })?;
        let b = train_tts(p, a, &examples, &cfg.tts_train)?;
        pipeline.baseline = Some(TtsEngine::new(b.prosody, b.acoustic));
    }
    Ok(SyntheticPipeline { pipeline, embeddings, history: out.history })
}
