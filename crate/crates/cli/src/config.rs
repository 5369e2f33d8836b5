//! Settings shared by every command, read from an optional TOML file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use mimic_core::corpus::NormMode;
use mimic_core::style_model::{ClassifierConfig, TrainConfig};
use mimic_core::tts_engine::{AcousticConfig, NeuralVocoderConfig, ProsodyConfig, TtsTrainConfig, VocoderKind};
use mimic_service::ServiceConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub per_class: usize,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub keyword_prob: f64,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self { per_class: 20, dev_fraction: 1.0 / 3.0, test_fraction: 0.0, keyword_prob: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: u64,
    pub norm: NormMode,
    /// Vocoder override; bundles keep their saved choice when absent.
    pub vocoder: Option<VocoderKind>,
    /// Feature-extraction threads.
    pub workers: usize,
    /// Word-vector table; hashed vectors when absent.
    pub embeddings: Option<PathBuf>,
    /// Resample audio to this rate before feature extraction.
    pub feature_rate: Option<u32>,
    pub classifier: ClassifierConfig,
    pub train: TrainConfig,
    pub prosody: ProsodyConfig,
    pub acoustic: AcousticConfig,
    pub tts: TtsTrainConfig,
    pub neural_vocoder: NeuralVocoderConfig,
    pub synthetic: SyntheticSection,
    pub service: ServiceConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            norm: NormMode::Both,
            vocoder: None,
            workers: 1,
            embeddings: None,
            feature_rate: None,
            classifier: ClassifierConfig::default(),
            train: TrainConfig::default(),
            prosody: ProsodyConfig::default(),
            acoustic: AcousticConfig::default(),
            tts: TtsTrainConfig::default(),
            neural_vocoder: NeuralVocoderConfig::default(),
            synthetic: SyntheticSection::default(),
            service: ServiceConfig::default(),
        }
    }
}

impl CliConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Copies the top-level seed into every component.
    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.classifier.seed = seed;
        self.train.seed = seed;
        self.prosody.seed = seed;
        self.acoustic.seed = seed;
        self.tts.seed = seed;
        self.neural_vocoder.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_keep_defaults() {
        let c: CliConfig = toml::from_str("seed = 3\nnorm = \"mfcc\"\n[train]\nepochs = 7\n[service]\nport = 9000\n").unwrap();
        assert_eq!(c.norm, NormMode::Mfcc);
        assert_eq!(c.train.epochs, 7);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(c.service.port, 9000);
        let c = c.seeded(11);
        assert_eq!((c.train.seed, c.prosody.seed, c.tts.seed), (11, 11, 11));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<CliConfig>("sede = 3").is_err());
    }
}
