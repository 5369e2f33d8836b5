//! Text-to-speech: frontend, prosody and acoustic models, vocoders.

pub mod acoustic;
pub mod conditioning;
pub mod data;
pub mod engine;
pub mod frontend;
pub mod prosody;
pub mod train;
pub mod neural_vocoder;
pub mod vocoder;

pub use crate::pitch::estimate_f0;
pub use acoustic::{predict_acoustic, AcousticConfig, AcousticFrames, AcousticModel};
pub use conditioning::Scaler;
pub use engine::{Synthesis, TtsEngine, Vocoder, VocoderKind};
pub use data::{build_examples, build_examples_from_waves, uniform_alignment, PhoneTargets, TtsExample};
pub use frontend::{text_to_linguistic, Lexicon, LinguisticSequence, LING_DIM};
pub use neural_vocoder::{mu_law_decode, mu_law_encode, train_neural_vocoder, vocode_neural, NeuralVocoder, NeuralVocoderConfig, VocoderExample};
pub use train::{
    acoustic_gradient_error, prosody_gradient_error, train_tts, tts_history_csv, TtsEpochRecord, TtsTrainConfig, TtsTrainOutcome,
};
pub use vocoder::{vocode_dsp, DspVocoder};
pub use prosody::{predict_prosody, track_from_phones, PhoneProsody, ProsodyConfig, ProsodyModel, ProsodyTrack};
