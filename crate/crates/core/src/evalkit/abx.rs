//! ABX style discrimination: one item per unordered style pair.

use std::collections::{BTreeMap, HashMap};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{StyleLabel, NUM_STYLES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

impl std::str::FromStr for Choice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Choice::A),
            "B" | "b" => Ok(Choice::B),
            _ => Err(Error::invalid(format!("choice must be A or B, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbxItem {
    pub id: String,
    pub style_a: StyleLabel,
    pub style_b: StyleLabel,
    /// Style of X; one of `style_a`, `style_b`.
    pub ref_style: StyleLabel,
    pub audio_a: String,
    pub audio_b: String,
    pub audio_x: String,
    pub correct: Choice,
}

impl AbxItem {
    pub fn validate(&self) -> Result<()> {
        let want = if self.ref_style == self.style_a { Choice::A } else { Choice::B };
        let ok = self.style_a != self.style_b
            && (self.ref_style == self.style_a || self.ref_style == self.style_b)
            && self.correct == want
            && self.audio_x != self.audio_a
            && self.audio_x != self.audio_b
            && self.audio_a != self.audio_b;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("ABX item {} is inconsistent", self.id)))
        }
    }

    /// The pair in canonical style order.
    pub fn pair(&self) -> (StyleLabel, StyleLabel) {
        (self.style_a.min(self.style_b), self.style_a.max(self.style_b))
    }
}

/// Builds one item per unordered pair of `styles`, in canonical pair order.
/// Which style plays A is drawn at random, as is the style of X; X is a
/// different sample than the A/B stimulus of its style.
pub fn build_abx(styles: &[StyleLabel], pool: &BTreeMap<StyleLabel, Vec<String>>, seed: u64) -> Result<Vec<AbxItem>> {
    let mut styles: Vec<StyleLabel> = styles.to_vec();
    styles.sort();
    styles.dedup();
    if styles.len() < 2 {
        return Err(Error::invalid("ABX needs at least two styles"));
    }
    for s in &styles {
        let n = pool.get(s).map_or(0, Vec::len);
        if n < 2 {
            return Err(Error::invalid(format!("style {s} has {n} samples; ABX needs at least 2")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    for (i, &s) in styles.iter().enumerate() {
        for &t in &styles[i + 1..] {
            let (sa, sb) = if rng.random_bool(0.5) { (s, t) } else { (t, s) };
            let a = pool[&sa].choose(&mut rng).expect("non-empty").clone();
            let b = pool[&sb].choose(&mut rng).expect("non-empty").clone();
            let (ref_style, taken) = if rng.random_bool(0.5) { (sa, &a) } else { (sb, &b) };
            let rest: Vec<&String> = pool[&ref_style].iter().filter(|p| *p != taken).collect();
            let x = (*rest.choose(&mut rng).ok_or_else(|| Error::invalid(format!("style {ref_style} has duplicate samples only")))?).clone();
            let item = AbxItem {
                id: format!("abx-{:02}", items.len()),
                style_a: sa,
                style_b: sb,
                ref_style,
                audio_a: a,
                audio_b: b,
                audio_x: x,
                correct: if ref_style == sa { Choice::A } else { Choice::B },
            };
            item.validate()?;
            items.push(item);
        }
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbxAnswer {
    pub session_id: String,
    pub item_id: String,
    pub choice: Choice,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub styles: (StyleLabel, StyleLabel),
    pub correct: usize,
    pub total: usize,
}

impl PairScore {
    pub fn accuracy(&self) -> f64 {
        100.0 * self.correct as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbxScore {
    pub correct: usize,
    pub total: usize,
    /// Percent.
    pub accuracy: f64,
    pub per_pair: Vec<PairScore>,
}

impl AbxScore {
    /// Symmetric percent-correct matrix in style index order; `None` where a
    /// pair has no answers.
    pub fn matrix(&self) -> [[Option<f64>; NUM_STYLES]; NUM_STYLES] {
        let mut m = [[None; NUM_STYLES]; NUM_STYLES];
        for p in &self.per_pair {
            let (i, j) = (p.styles.0.index(), p.styles.1.index());
            m[i][j] = Some(p.accuracy());
            m[j][i] = m[i][j];
        }
        m
    }
}

pub fn score_abx(answers: &[AbxAnswer], items: &[AbxItem]) -> Result<AbxScore> {
    if answers.is_empty() {
        return Err(Error::invalid("no ABX answers to score"));
    }
    let by_id: HashMap<&str, &AbxItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut pairs: BTreeMap<(StyleLabel, StyleLabel), (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for a in answers {
        let item = by_id.get(a.item_id.as_str()).ok_or_else(|| Error::invalid(format!("answer to unknown ABX item `{}`", a.item_id)))?;
        let hit = a.choice == item.correct;
        correct += hit as usize;
        let e = pairs.entry(item.pair()).or_default();
        e.0 += hit as usize;
        e.1 += 1;
    }
    Ok(AbxScore {
        correct,
        total: answers.len(),
        accuracy: 100.0 * correct as f64 / answers.len() as f64,
        per_pair: pairs.into_iter().map(|(styles, (c, t))| PairScore { styles, correct: c, total: t }).collect(),
    })
}
