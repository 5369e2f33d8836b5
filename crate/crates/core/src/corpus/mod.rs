//! Corpus loading, label mapping and acoustic feature extraction.

pub mod label;
pub mod manifest;
pub mod embedding;
pub mod features;
pub mod mfcc;
pub mod normalize;
pub mod prosody;
pub mod synthetic;

pub use label::{map_label, CorpusKind, StyleLabel, NUM_STYLES};
pub use manifest::{load_manifest, Corpus, Split, Utterance};
pub use mfcc::{extract_mfcc, MFCC_DIM};
pub use prosody::{extract_prosody, extract_prosody_with_tokens, PROSODY_DIM};
pub use embedding::{load_provider, tokenize, EmbeddingProvider, HashEmbeddings, TableEmbeddings, EMBED_DIM};
pub use normalize::{NormMode, NormStats};
pub use features::{extract_corpus, fit_normalizer, load_features, save_features, FeatureBundle};
pub use synthetic::{default_spec, generate_synthetic_corpus, StyleSpec, SyntheticConfig, SyntheticCorpus};
