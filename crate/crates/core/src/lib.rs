pub mod audio;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod evalkit;
pub mod nn;
pub mod pipeline;
pub mod pitch;
pub mod style_model;
pub mod tts_engine;

pub use audio::Waveform;
pub use error::{Error, Result};
