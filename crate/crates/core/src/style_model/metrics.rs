//! Confusion-matrix accuracies.

use serde::{Deserialize, Serialize};

use super::weights::ClassWeights;
use crate::corpus::NUM_STYLES;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub unweighted_acc: f64,
    pub weighted_acc: f64,
    /// `None` for classes absent from the evaluated data.
    pub per_class_recall: [Option<f64>; NUM_STYLES],
    /// Rows are true classes, columns predictions.
    pub confusion: [[usize; NUM_STYLES]; NUM_STYLES],
}

impl Metrics {
    pub fn from_confusion(confusion: [[usize; NUM_STYLES]; NUM_STYLES], weights: &ClassWeights) -> Result<Self> {
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::invalid("no labelled examples to evaluate"));
        }
        let correct: usize = (0..NUM_STYLES).map(|c| confusion[c][c]).sum();
        let mut per_class_recall = [None; NUM_STYLES];
        let (mut num, mut den) = (0.0, 0.0);
        for c in 0..NUM_STYLES {
            let n: usize = confusion[c].iter().sum();
            if n == 0 {
                continue;
            }
            let r = confusion[c][c] as f64 / n as f64;
            per_class_recall[c] = Some(r);
            num += weights.w[c] * r;
            den += weights.w[c];
        }
        Ok(Self {
            unweighted_acc: correct as f64 / total as f64,
            weighted_acc: if den > 0.0 { num / den } else { 0.0 },
            per_class_recall,
            confusion,
        })
    }

    pub fn from_predictions(pairs: &[(usize, usize)], weights: &ClassWeights) -> Result<Self> {
        let mut conf = [[0; NUM_STYLES]; NUM_STYLES];
        for &(t, p) in pairs {
            conf[t][p] += 1;
        }
        Self::from_confusion(conf, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_class_hand_example() {
        // neutral: 75 items, 60 right; happy: 25 items, 15 right.
        let mut conf = [[0; 6]; 6];
        conf[2][2] = 60;
        conf[2][3] = 15;
        conf[3][3] = 15;
        conf[3][2] = 10;
        let w = ClassWeights::from_counts(&[0, 0, 75, 25, 0, 0], 0.25).unwrap();
        assert_eq!(w.w[2], 4.0);
        assert_eq!(w.w[3], 4.0);
        let m = Metrics::from_confusion(conf, &w).unwrap();
        assert!((m.weighted_acc - 0.7).abs() < 1e-12);
        assert!((m.unweighted_acc - 0.75).abs() < 1e-12);
        assert_eq!(m.per_class_recall[0], None);
    }

    #[test]
    fn perfect_and_empty() {
        let mut conf = [[0; 6]; 6];
        for (c, row) in conf.iter_mut().enumerate() {
            row[c] = c + 1;
        }
        let m = Metrics::from_confusion(conf, &ClassWeights::from_counts(&[3, 1, 4, 1, 5, 9], 0.25).unwrap()).unwrap();
        assert_eq!(m.weighted_acc, 1.0);
        assert_eq!(m.unweighted_acc, 1.0);
        assert!(Metrics::from_confusion([[0; 6]; 6], &ClassWeights::uniform()).is_err());
    }
}
