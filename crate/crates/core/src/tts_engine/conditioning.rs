//! Utterance-level conditioning and target scaling shared by the prosody and
//! acoustic models.

use serde::{Deserialize, Serialize};

use crate::corpus::NUM_STYLES;
use crate::error::{Error, Result};
use crate::nn::{Mat, ParamId, Params, Tape, Var};
use crate::style_model::StyleEmbedding;

/// Per-column affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Fits mean and population std; tiny spreads are floored so constant
    /// columns pass through unchanged apart from the shift.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut n = 0.0;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for r in rows {
            n += 1.0;
            for c in 0..dim {
                sum[c] += r[c];
                sq[c] += r[c] * r[c];
            }
        }
        if n == 0.0 {
            return Self::identity(dim);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq.iter().zip(&mean).map(|(q, m)| (q / n - m * m).max(0.0).sqrt().max(1e-3)).collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn forward(&self, row: &mut [f64]) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - self.mean[c]) / self.std[c];
        }
    }

    pub fn inverse(&self, row: &mut [f64]) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = *v * self.std[c] + self.mean[c];
        }
    }
}

pub fn speaker_index(speakers: &[String], speaker: &str) -> Result<usize> {
    speakers
        .iter()
        .position(|s| s == speaker)
        .ok_or_else(|| Error::invalid(format!("unknown speaker `{speaker}` (known: {})", speakers.join(", "))))
}

/// Learned speaker table plus a projection of `[style ; speaker]` onto the
/// gate pre-activations of a recurrent layer. Adding the projection at every
/// step is the same as concatenating the conditioning vector to every input
/// step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CondLayer {
    pub speakers: ParamId,
    pub proj: ParamId,
}

impl CondLayer {
    pub fn new(params: &mut Params, name: &str, n_speakers: usize, speaker_dim: usize, out: usize, rng: &mut impl rand::Rng) -> Self {
        let speakers = params.add(format!("{name}.speakers"), crate::nn::uniform_mat(rng, n_speakers, speaker_dim, 0.1));
        let width = NUM_STYLES + speaker_dim;
        let bound = (6.0 / (width + out) as f64).sqrt();
        let proj = params.add(format!("{name}.proj"), crate::nn::uniform_mat(rng, width, out, bound));
        Self { speakers, proj }
    }

    /// `B×out` step bias for a batch.
    pub fn forward(&self, tape: &mut Tape, styles: &Mat, speaker_ids: &[usize]) -> Var {
        let table = tape.param(self.speakers);
        let spk = tape.gather_rows(table, speaker_ids);
        let st = tape.input(styles.clone());
        let cond = tape.concat_cols(&[st, spk]);
        let w = tape.param(self.proj);
        tape.matmul(cond, w)
    }
}

/// Stacks style vectors into a `B×6` matrix, zeroed when `zero_style` is set.
pub(crate) fn style_rows(styles: &[&StyleEmbedding], zero_style: bool) -> Mat {
    let mut m = Mat::zeros(styles.len(), NUM_STYLES);
    if !zero_style {
        for (r, s) in styles.iter().enumerate() {
            m.row_mut(r).copy_from_slice(s.as_slice());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaler_round_trip() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]];
        let s = Scaler::fit(rows.iter().map(|r| r.as_slice()), 2);
        assert_eq!(s.mean, vec![3.0, 5.0]);
        let mut r = vec![5.0, 5.0];
        s.forward(&mut r);
        assert!((r[0] - 1.224744871391589).abs() < 1e-12);
        assert_eq!(r[1], 0.0);
        s.inverse(&mut r);
        assert!((r[0] - 5.0).abs() < 1e-12 && (r[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_speaker() {
        let sp = vec!["a".to_string()];
        assert_eq!(speaker_index(&sp, "a").unwrap(), 0);
        assert!(speaker_index(&sp, "b").is_err());
    }
}
