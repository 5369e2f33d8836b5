//! JSON-lines corpus manifests.
//!
//! One object per line: `{"id", "audio", "text", "speaker", "style"?, "split", "corpus"}`.
//! Relative audio paths resolve against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::label::{map_label, CorpusKind, StyleLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub audio: PathBuf,
    pub text: String,
    pub speaker: String,
    /// Raw label as written in the source corpus, if any.
    pub raw_style: Option<String>,
    pub style: Option<StyleLabel>,
    pub corpus: String,
    pub split: Split,
}

#[derive(Debug, Deserialize)]
struct ManifestLine {
    id: Option<String>,
    audio: Option<String>,
    text: Option<String>,
    speaker: Option<String>,
    style: Option<String>,
    split: Option<String>,
    corpus: Option<String>,
}

#[derive(Debug, Serialize)]
struct ManifestOut<'a> {
    id: &'a str,
    audio: String,
    text: &'a str,
    speaker: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    style: Option<&'a str>,
    split: &'a str,
    corpus: &'a str,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for u in &utterances {
            if !seen.insert(u.id.as_str()) {
                return Err(Error::DuplicateId(u.id.clone()));
            }
        }
        Ok(Self { utterances })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&Utterance> {
        self.utterances.iter().filter(|u| u.split == split).collect()
    }

    /// Utterance counts per (split, style) over labelled utterances.
    pub fn counts(&self) -> BTreeMap<(Split, StyleLabel), usize> {
        let mut out = BTreeMap::new();
        for u in &self.utterances {
            if let Some(s) = u.style {
                *out.entry((u.split, s)).or_insert(0) += 1;
            }
        }
        out
    }

    /// Per-class counts of one split, in canonical style order.
    pub fn class_counts(&self, split: Split) -> [usize; 6] {
        let mut c = [0; 6];
        for u in self.utterances.iter().filter(|u| u.split == split) {
            if let Some(s) = u.style {
                c[s.index()] += 1;
            }
        }
        c
    }

    /// Text table of counts: one row per split plus an `all` row.
    pub fn count_report(&self) -> String {
        let mut out = String::from("split");
        for s in StyleLabel::ALL {
            let _ = write!(out, "\t{s}");
        }
        out.push('\n');
        let mut all = [0usize; 6];
        for split in Split::ALL {
            let c = self.class_counts(split);
            let _ = write!(out, "{}", split.name());
            for (i, v) in c.iter().enumerate() {
                all[i] += v;
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out.push_str("all");
        for v in all {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
        out
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut out = String::new();
        for u in &self.utterances {
            let audio = u.audio.strip_prefix(base).unwrap_or(&u.audio).to_string_lossy().into_owned();
            let line = ManifestOut {
                id: &u.id,
                audio,
                text: &u.text,
                speaker: &u.speaker,
                style: u.raw_style.as_deref().or(u.style.map(StyleLabel::name)),
                split: u.split.name(),
                corpus: &u.corpus,
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Reads a manifest, mapping raw style strings with [`map_label`].
pub fn load_manifest(path: &Path, kind: CorpusKind) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut utterances = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { path: path.to_path_buf(), line: lineno, msg };
        let raw: ManifestLine = serde_json::from_str(line).map_err(|e| perr(e.to_string()))?;
        let need = |v: Option<String>, field: &str| v.ok_or_else(|| perr(format!("missing field `{field}`")));
        let id = need(raw.id, "id")?;
        let audio = need(raw.audio, "audio")?;
        let text = need(raw.text, "text")?;
        let speaker = need(raw.speaker, "speaker")?;
        let split: Split = need(raw.split, "split")?.parse().map_err(|e: Error| perr(e.to_string()))?;
        let corpus = need(raw.corpus, "corpus")?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let audio = if Path::new(&audio).is_absolute() { PathBuf::from(audio) } else { base.join(audio) };
        if !audio.exists() {
            return Err(perr(format!("audio file {} not found", audio.display())));
        }
        let style = raw.style.as_deref().and_then(|s| map_label(s, kind));
        utterances.push(Utterance { id, audio, text, speaker, raw_style: raw.style, style, corpus, split });
    }
    Ok(Corpus { utterances })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["a.wav", "b.wav", "c.wav"] {
            write(dir.path(), n, "");
        }
        let m = write(
            dir.path(),
            "m.jsonl",
            r#"{"id":"1","audio":"a.wav","text":"hi","speaker":"s","style":"excited","split":"train","corpus":"ext"}
{"id":"2","audio":"b.wav","text":"hi","speaker":"s","split":"dev","corpus":"ext"}
{"id":"3","audio":"c.wav","text":"hi","speaker":"s","style":"surprise","split":"test","corpus":"ext"}
"#,
        );
        let c = load_manifest(&m, CorpusKind::External).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.utterances[0].style, Some(StyleLabel::Happy));
        assert_eq!(c.utterances[1].style, None);
        assert_eq!(c.utterances[2].style, None);
        assert_eq!(c.utterances[2].raw_style.as_deref(), Some("surprise"));
        assert_eq!(c.utterances[0].audio, dir.path().join("a.wav"));
    }

    #[test]
    fn missing_text_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.wav", "");
        let m = write(
            dir.path(),
            "m.jsonl",
            "{\"id\":\"1\",\"audio\":\"a.wav\",\"text\":\"x\",\"speaker\":\"s\",\"split\":\"train\",\"corpus\":\"c\"}\n\
             {\"id\":\"2\",\"audio\":\"a.wav\",\"speaker\":\"s\",\"split\":\"train\",\"corpus\":\"c\"}\n",
        );
        let err = load_manifest(&m, CorpusKind::Tts).unwrap_err();
        match &err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(*line, 2);
                assert!(msg.contains("text"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.wav", "");
        let line = "{\"id\":\"1\",\"audio\":\"a.wav\",\"text\":\"x\",\"speaker\":\"s\",\"split\":\"train\",\"corpus\":\"c\"}\n";
        let m = write(dir.path(), "m.jsonl", &line.repeat(2));
        assert!(matches!(load_manifest(&m, CorpusKind::Tts), Err(Error::DuplicateId(_))));
    }
}
