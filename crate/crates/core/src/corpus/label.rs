use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The six speaking styles, in the fixed index order used by every vector
/// in the system (embeddings, class weights, confusion matrices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleLabel {
    Rushed = 0,
    Soft = 1,
    Neutral = 2,
    Happy = 3,
    Angry = 4,
    Sad = 5,
}

pub const NUM_STYLES: usize = 6;

impl StyleLabel {
    pub const ALL: [StyleLabel; NUM_STYLES] =
        [StyleLabel::Rushed, StyleLabel::Soft, StyleLabel::Neutral, StyleLabel::Happy, StyleLabel::Angry, StyleLabel::Sad];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<StyleLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            StyleLabel::Rushed => "rushed",
            StyleLabel::Soft => "soft",
            StyleLabel::Neutral => "neutral",
            StyleLabel::Happy => "happy",
            StyleLabel::Angry => "angry",
            StyleLabel::Sad => "sad",
        }
    }
}

impl fmt::Display for StyleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StyleLabel {
    type Err = Error;

    /// Parses a canonical style name only; source-corpus aliases go through
    /// [`map_label`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown style `{s}`")))
    }
}

/// Which label vocabulary a corpus uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    /// The synthesis corpus: labelled with the six styles directly.
    Tts,
    /// An external emotion corpus: only neutral/happy/sad/angry are kept and
    /// `excited` is folded into happy.
    External,
}

impl FromStr for CorpusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tts" => Ok(CorpusKind::Tts),
            "external" => Ok(CorpusKind::External),
            other => Err(Error::invalid(format!("unknown corpus kind `{other}`"))),
        }
    }
}

/// Maps a raw corpus label onto the style taxonomy. Unmappable labels give
/// `None` and the utterance is left out of labelled training.
pub fn map_label(raw: &str, kind: CorpusKind) -> Option<StyleLabel> {
    let raw = raw.trim().to_ascii_lowercase();
    match kind {
        CorpusKind::Tts => raw.parse().ok(),
        CorpusKind::External => match raw.as_str() {
            "neutral" | "neu" => Some(StyleLabel::Neutral),
            "happy" | "hap" | "excited" | "exc" => Some(StyleLabel::Happy),
            "sad" => Some(StyleLabel::Sad),
            "angry" | "anger" | "ang" => Some(StyleLabel::Angry),
            _ => None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_stable() {
        let names: Vec<_> = StyleLabel::ALL.iter().map(|l| l.name()).collect();
        assert_eq!(names, ["rushed", "soft", "neutral", "happy", "angry", "sad"]);
        for (i, l) in StyleLabel::ALL.iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(StyleLabel::from_index(i), Some(*l));
        }
    }

    #[test]
    fn external_merges_excited_into_happy() {
        assert_eq!(map_label("excited", CorpusKind::External), Some(StyleLabel::Happy));
        assert_eq!(map_label("neutral", CorpusKind::External), Some(StyleLabel::Neutral));
        assert_eq!(map_label("surprise", CorpusKind::External), None);
        assert_eq!(map_label("rushed", CorpusKind::External), None);
        assert_eq!(map_label("frustrated", CorpusKind::External), None);
    }

    #[test]
    fn tts_labels_map_one_to_one() {
        for l in StyleLabel::ALL {
            assert_eq!(map_label(l.name(), CorpusKind::Tts), Some(l));
        }
        assert_eq!(map_label("excited", CorpusKind::Tts), None);
    }

    #[test]
    fn parse_rejects_aliases() {
        assert!("excited".parse::<StyleLabel>().is_err());
        assert_eq!("Happy".parse::<StyleLabel>().unwrap(), StyleLabel::Happy);
    }
}
