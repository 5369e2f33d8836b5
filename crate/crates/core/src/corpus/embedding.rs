//! Word embeddings for transcripts.
//!
//! Text files use the common `word v1 v2 ... v300` layout. Words missing from
//! a loaded table, or every word when no table is loaded, get a deterministic
//! pseudo-random unit vector derived from the word itself.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::Mat;

pub const EMBED_DIM: usize = 300;

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_word(&self, word: &str) -> Vec<f64>;

    /// `T×dim` matrix, one row per token of `text`; empty text gives `0×dim`.
    fn embed_text(&self, text: &str) -> Mat {
        let toks = tokenize(text);
        let d = self.dim();
        let mut m = Mat::zeros(toks.len(), d);
        for (i, t) in toks.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&self.embed_word(t));
        }
        m
    }
}

/// Lowercases and splits on anything that is not alphanumeric or an apostrophe.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct HashEmbeddings {
    dim: usize,
}

impl HashEmbeddings {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Default for HashEmbeddings {
    fn default() -> Self {
        Self::new(EMBED_DIM)
    }
}

impl EmbeddingProvider for HashEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_word(&self, word: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word));
        let mut v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x /= n);
        v
    }
}

/// A loaded embedding table with hashed fallback for unknown words.
#[derive(Debug, Clone)]
pub struct TableEmbeddings {
    table: HashMap<String, Vec<f64>>,
    fallback: HashEmbeddings,
}

impl TableEmbeddings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|(line, msg)| Error::Parse { path: path.to_path_buf(), line, msg })
    }

    fn parse(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut table = HashMap::new();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let v: Vec<f64> = parts
                .map(|p| p.parse::<f64>().map_err(|e| (i + 1, format!("bad value `{p}`: {e}"))))
                .collect::<std::result::Result<_, _>>()?;
            // word2vec text dumps start with a "count dim" header line.
            if i == 0 && v.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => return Err((i + 1, format!("expected {d} values, found {}", v.len()))),
                _ => {}
            }
            table.insert(word.to_lowercase(), v);
        }
        let dim = dim.ok_or((0, "no vectors in file".to_string()))?;
        if dim == 0 {
            return Err((1, "vectors have no components".into()));
        }
        Ok(Self { table, fallback: HashEmbeddings::new(dim) })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl EmbeddingProvider for TableEmbeddings {
    fn dim(&self) -> usize {
        self.fallback.dim
    }

    fn embed_word(&self, word: &str) -> Vec<f64> {
        self.table.get(word).cloned().unwrap_or_else(|| self.fallback.embed_word(word))
    }
}

/// Loads a table when a path is given, otherwise uses hashed vectors.
pub fn load_provider(path: Option<&Path>) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(match path {
        Some(p) => Box::new(TableEmbeddings::load(p)?),
        None => Box::new(HashEmbeddings::default()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("Hello, World! It's 5pm."), ["hello", "world", "it's", "5pm"]);
        assert!(tokenize("  ...  ").is_empty());
    }

    #[test]
    fn hashed_vectors_are_deterministic_unit_vectors() {
        let h = HashEmbeddings::default();
        let a = h.embed_word("cat");
        assert_eq!(a, h.embed_word("cat"));
        assert_ne!(a, h.embed_word("dog"));
        assert_eq!(a.len(), EMBED_DIM);
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn text_shapes() {
        let h = HashEmbeddings::default();
        assert_eq!(h.embed_text("").rows, 0);
        assert_eq!(h.embed_text("").cols, EMBED_DIM);
        let m = h.embed_text("one two three");
        assert_eq!((m.rows, m.cols), (3, EMBED_DIM));
    }

    #[test]
    fn table_with_fallback() {
        let t = TableEmbeddings::parse("2 3\ncat 1 0 0\ndog 0 1 0\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.embed_word("cat"), vec![1.0, 0.0, 0.0]);
        assert_eq!(t.embed_word("bird").len(), 3);
        assert!(TableEmbeddings::parse("cat 1 0\ndog 1\n").is_err());
    }
}
