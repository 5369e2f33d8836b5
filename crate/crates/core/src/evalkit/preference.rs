//! Baseline versus styled preference test.
//!
//! Each item pairs the baseline rendition of a text with one multi-style
//! rendition (neutral or a hand-set mix). Sides are randomized per item and
//! the listener's A/B pick is recorded as the condition it stands for.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::abx::Choice;
use crate::error::{Error, Result};
use crate::style_model::StyleEmbedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    MultiStyleNeutral,
    MultiStyleOther,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Baseline, Condition::MultiStyleNeutral, Condition::MultiStyleOther];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::MultiStyleNeutral => "multi_style_neutral",
            Condition::MultiStyleOther => "multi_style_other",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::invalid(format!("unknown preference condition `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceItem {
    pub id: String,
    pub text: String,
    /// The styled condition in this item.
    pub styled: Condition,
    pub embedding: StyleEmbedding,
    pub audio_a: String,
    pub audio_b: String,
    pub baseline_is_a: bool,
}

impl PreferenceItem {
    /// Condition behind the listener's pick.
    pub fn condition_for(&self, choice: Choice) -> Condition {
        if (choice == Choice::A) == self.baseline_is_a {
            Condition::Baseline
        } else {
            self.styled
        }
    }
}

/// One planned item before audio exists.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePlan {
    pub text: String,
    pub styled: Condition,
    pub embedding: StyleEmbedding,
}

/// Assigns ids and sides; `audio(i, is_baseline)` names each stimulus.
pub fn build_preference(
    plans: &[PreferencePlan],
    seed: u64,
    mut audio: impl FnMut(usize, bool) -> String,
) -> Result<Vec<PreferenceItem>> {
    if plans.is_empty() {
        return Err(Error::invalid("no preference texts"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    plans
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.styled == Condition::Baseline {
                return Err(Error::invalid("the styled side of a preference item cannot be the baseline"));
            }
            let baseline_is_a = rng.random_bool(0.5);
            let (base, styled) = (audio(i, true), audio(i, false));
            let (audio_a, audio_b) = if baseline_is_a { (base, styled) } else { (styled, base) };
            Ok(PreferenceItem {
                id: format!("pref-{i:03}"),
                text: p.text.clone(),
                styled: p.styled,
                embedding: p.embedding,
                audio_a,
                audio_b,
                baseline_is_a,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceAnswer {
    pub session_id: String,
    pub item_id: String,
    pub choice: Condition,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceScore {
    /// Tallies in [`Condition::ALL`] order.
    pub counts: [usize; 3],
    pub total: usize,
    /// Percentages in [`Condition::ALL`] order.
    pub percent: [f64; 3],
}

impl PreferenceScore {
    /// Share of answers preferring either styled condition.
    pub fn styled_percent(&self) -> f64 {
        self.percent[1] + self.percent[2]
    }
}

pub fn score_preference(choices: &[Condition]) -> Result<PreferenceScore> {
    if choices.is_empty() {
        return Err(Error::invalid("no preference answers to score"));
    }
    let mut counts = [0; 3];
    for &c in choices {
        counts[c as usize] += 1;
    }
    Ok(preference_from_counts(counts))
}

pub fn preference_from_counts(counts: [usize; 3]) -> PreferenceScore {
    let total: usize = counts.iter().sum();
    let percent = counts.map(|c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 });
    PreferenceScore { counts, total, percent }
}

/// Scores logged answers, checking each refers to a known item and to a
/// condition that item offered.
pub fn score_preference_answers(answers: &[PreferenceAnswer], items: &[PreferenceItem]) -> Result<PreferenceScore> {
    let by_id: HashMap<&str, &PreferenceItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    for a in answers {
        let item = by_id.get(a.item_id.as_str()).ok_or_else(|| Error::invalid(format!("answer to unknown preference item `{}`", a.item_id)))?;
        if a.choice != Condition::Baseline && a.choice != item.styled {
            return Err(Error::invalid(format!("item {} did not offer {}", item.id, a.choice.name())));
        }
    }
    score_preference(&answers.iter().map(|a| a.choice).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tallies(b: usize, n: usize, o: usize) -> Vec<Condition> {
        let mut v = vec![Condition::Baseline; b];
        v.extend(vec![Condition::MultiStyleNeutral; n]);
        v.extend(vec![Condition::MultiStyleOther; o]);
        v
    }

    #[test]
    fn table_percentages() {
        let s = score_preference(&tallies(140, 271, 89)).unwrap();
        assert_eq!(s.total, 500);
        for (got, want) in s.percent.iter().zip([28.0, 54.2, 17.8]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!((s.styled_percent() - 72.0).abs() < 1e-9);
        assert_eq!(score_preference(&tallies(5, 0, 0)).unwrap().percent, [100.0, 0.0, 0.0]);
        assert_eq!(score_preference(&tallies(0, 0, 1)).unwrap().percent, [0.0, 0.0, 100.0]);
        assert!(score_preference(&[]).is_err());
    }

    #[test]
    fn sides_map_back_to_conditions() {
        let e = StyleEmbedding([0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let plans: Vec<_> = (0..20)
            .map(|i| PreferencePlan {
                text: "hi".into(),
                styled: if i % 2 == 0 { Condition::MultiStyleNeutral } else { Condition::MultiStyleOther },
                embedding: e,
            })
            .collect();
        let items = build_preference(&plans, 3, |i, b| format!("{i}-{b}")).unwrap();
        assert!(items.iter().any(|i| i.baseline_is_a) && items.iter().any(|i| !i.baseline_is_a));
        for it in &items {
            let base = if it.baseline_is_a { &it.audio_a } else { &it.audio_b };
            assert!(base.ends_with("true"));
            let pick = if it.baseline_is_a { Choice::A } else { Choice::B };
            assert_eq!(it.condition_for(pick), Condition::Baseline);
            let other = if pick == Choice::A { Choice::B } else { Choice::A };
            assert_eq!(it.condition_for(other), it.styled);
        }
        let bad = PreferenceAnswer { session_id: "s".into(), item_id: items[0].id.clone(), choice: Condition::MultiStyleOther, timestamp: 0 };
        assert!(score_preference_answers(&[bad], &items).is_err());
    }
}
