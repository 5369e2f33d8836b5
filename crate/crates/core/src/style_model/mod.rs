//! Style classification: model, training, adaptation, metrics and labelling.

pub mod adabn;
pub mod classifier;
pub mod labeling;
pub mod metrics;
pub mod style_embedding;
pub mod train;
pub mod weights;

pub use adabn::{adapt_bn, adapt_bn_with_activations, bn_outputs};
pub use classifier::{weighted_loss, ClassifierConfig, StyleClassifier};
pub use labeling::{label_bundles, label_corpus, read_embeddings, write_embeddings, EmbeddingRecord, LabelReport};
pub use metrics::Metrics;
pub use style_embedding::StyleEmbedding;
pub use train::{
    classifier_gradient_error, evaluate, normalize_by_corpus, train_classifier, write_history, EpochRecord, TrainConfig, TrainOutcome,
};
pub use weights::{count_labels, ClassWeights};
