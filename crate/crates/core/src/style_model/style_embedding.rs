use serde::{Deserialize, Serialize};

use crate::corpus::{StyleLabel, NUM_STYLES};
use crate::error::{Error, Result};

/// Probability vector over the six styles in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StyleEmbedding(pub [f64; NUM_STYLES]);

pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

impl StyleEmbedding {
    /// Validates that `p` lies on the simplex.
    pub fn new(p: [f64; NUM_STYLES]) -> Result<Self> {
        let e = Self(p);
        if !e.is_valid(SIMPLEX_TOLERANCE) {
            return Err(Error::invalid(format!("style embedding {p:?} is not a probability vector")));
        }
        Ok(e)
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_STYLES] = p
            .try_into()
            .map_err(|_| Error::invalid(format!("style embedding needs {NUM_STYLES} values, got {}", p.len())))?;
        Self::new(arr)
    }

    /// Softmax of raw scores.
    pub fn from_logits(logits: &[f64]) -> Self {
        let p = crate::nn::tape::softmax(logits);
        let mut out = [0.0; NUM_STYLES];
        out.copy_from_slice(&p[..NUM_STYLES]);
        Self(out)
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.0.iter().all(|&v| v.is_finite() && v >= 0.0) && (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    pub fn argmax(&self) -> StyleLabel {
        let mut best = 0;
        for i in 1..NUM_STYLES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        StyleLabel::from_index(best).expect("index in range")
    }

    pub fn get(&self, s: StyleLabel) -> f64 {
        self.0[s.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn zeros() -> [f64; NUM_STYLES] {
        [0.0; NUM_STYLES]
    }
}
