//! Text to waveform through frontend, prosody, acoustic model and vocoder.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::acoustic::{AcousticFrames, AcousticModel};
use super::frontend::{text_to_linguistic, Lexicon, LinguisticSequence};
use super::neural_vocoder::NeuralVocoder;
use super::prosody::{ProsodyModel, ProsodyTrack};
use super::vocoder::DspVocoder;
use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::style_model::StyleEmbedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VocoderKind {
    #[default]
    Dsp,
    Neural,
}

impl std::str::FromStr for VocoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dsp" => Ok(VocoderKind::Dsp),
            "neural" => Ok(VocoderKind::Neural),
            _ => Err(Error::invalid(format!("unknown vocoder `{s}` (dsp|neural)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Vocoder {
    Dsp(DspVocoder),
    Neural(Box<NeuralVocoder>),
}

impl Vocoder {
    pub fn kind(&self) -> VocoderKind {
        match self {
            Vocoder::Dsp(_) => VocoderKind::Dsp,
            Vocoder::Neural(_) => VocoderKind::Neural,
        }
    }

    pub fn vocode(&self, frames: &AcousticFrames, f0: &[f64]) -> Result<Waveform> {
        match self {
            Vocoder::Dsp(v) => v.vocode(frames, f0),
            Vocoder::Neural(v) => v.vocode(frames, f0),
        }
    }
}

/// Everything produced for one utterance.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub ling: LinguisticSequence,
    pub track: ProsodyTrack,
    pub frames: AcousticFrames,
    pub wave: Waveform,
}

#[derive(Debug, Clone)]
pub struct TtsEngine {
    pub lexicon: Lexicon,
    pub prosody: ProsodyModel,
    pub acoustic: AcousticModel,
    pub vocoder: Vocoder,
}

pub const PROSODY_FILE: &str = "prosody.ckpt";
pub const ACOUSTIC_FILE: &str = "acoustic.ckpt";
pub const VOCODER_FILE: &str = "vocoder.ckpt";

impl TtsEngine {
    pub fn new(prosody: ProsodyModel, acoustic: AcousticModel) -> Self {
        Self { lexicon: Lexicon::builtin().clone(), prosody, acoustic, vocoder: Vocoder::Dsp(DspVocoder::default()) }
    }

    /// Runs every stage; failures carry the stage name.
    pub fn synthesize(&self, text: &str, style: &StyleEmbedding, speaker: &str) -> Result<Synthesis> {
        let ling = text_to_linguistic(text, &self.lexicon).map_err(|e| e.at_stage("frontend"))?;
        let track = self.prosody.predict(&ling, style, speaker).map_err(|e| e.at_stage("prosody"))?;
        let frames = self.acoustic.predict(&ling, &track, style, speaker).map_err(|e| e.at_stage("acoustic"))?;
        let wave = self.vocoder.vocode(&frames, &track.f0).map_err(|e| e.at_stage("vocoder"))?;
        Ok(Synthesis { ling, track, frames, wave })
    }

    /// Writes the model checkpoints into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.prosody.save(&dir.join(PROSODY_FILE))?;
        self.acoustic.save(&dir.join(ACOUSTIC_FILE))?;
        if let Vocoder::Neural(v) = &self.vocoder {
            v.save(&dir.join(VOCODER_FILE))?;
        }
        Ok(())
    }

    /// Loads checkpoints from `dir`; the neural vocoder is read only when
    /// requested.
    pub fn load(dir: &Path, vocoder: VocoderKind) -> Result<Self> {
        let mut e = Self::new(ProsodyModel::load(&dir.join(PROSODY_FILE))?, AcousticModel::load(&dir.join(ACOUSTIC_FILE))?);
        if vocoder == VocoderKind::Neural {
            e.vocoder = Vocoder::Neural(Box::new(NeuralVocoder::load(&dir.join(VOCODER_FILE))?));
        }
        Ok(e)
    }
}
