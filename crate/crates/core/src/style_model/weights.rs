//! Inverse-prior class weights with a capped neutral prior.

use serde::{Deserialize, Serialize};

use crate::corpus::{StyleLabel, NUM_STYLES};
use crate::error::{Error, Result};

pub const DEFAULT_NEUTRAL_CAP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: [f64; NUM_STYLES],
    pub cap: f64,
}

impl ClassWeights {
    /// `prior_c = count_c / total`, the neutral prior is lowered to `cap`
    /// when larger, and `w_c = 1 / prior_c`; classes without examples get 0.
    pub fn from_counts(counts: &[usize; NUM_STYLES], cap: f64) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::invalid("class weights need at least one labelled example"));
        }
        let mut w = [0.0; NUM_STYLES];
        for (c, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let mut prior = n as f64 / total as f64;
            if c == StyleLabel::Neutral.index() {
                prior = prior.min(cap);
            }
            w[c] = 1.0 / prior;
        }
        Ok(Self { w, cap })
    }

    pub fn uniform() -> Self {
        Self { w: [1.0; NUM_STYLES], cap: DEFAULT_NEUTRAL_CAP }
    }

    pub fn get(&self, label: StyleLabel) -> f64 {
        self.w[label.index()]
    }
}

/// Counts of labelled items per class.
pub fn count_labels<'a>(labels: impl IntoIterator<Item = &'a Option<StyleLabel>>) -> [usize; NUM_STYLES] {
    let mut c = [0; NUM_STYLES];
    for l in labels.into_iter().flatten() {
        c[l.index()] += 1;
    }
    c
}
