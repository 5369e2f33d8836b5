//! Per-style F0 level and spread over utterance-level voiced means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::corpus::StyleLabel;
use crate::error::Result;
use crate::pitch::estimate_f0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Row {
    pub style: StyleLabel,
    pub mean: f64,
    /// Population standard deviation of the utterance means.
    pub std: f64,
    /// Utterances with at least one voiced frame.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct F0StatsTable {
    pub rows: Vec<F0Row>,
    /// Styles whose samples had no voiced frame at all.
    pub absent: Vec<StyleLabel>,
}

impl F0StatsTable {
    pub fn get(&self, style: StyleLabel) -> Option<&F0Row> {
        self.rows.iter().find(|r| r.style == style)
    }
}

/// Mean F0 over voiced frames; `None` when nothing is voiced.
pub fn voiced_mean(wave: &Waveform) -> Result<Option<f64>> {
    let f0 = estimate_f0(wave)?;
    let v: Vec<f64> = f0.into_iter().filter(|&x| x > 0.0).collect();
    Ok((!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64))
}

/// Rows from precomputed utterance means.
pub fn f0_table_from_means(groups: &BTreeMap<StyleLabel, Vec<Option<f64>>>) -> F0StatsTable {
    let mut t = F0StatsTable::default();
    for (&style, means) in groups {
        let m: Vec<f64> = means.iter().flatten().copied().collect();
        if m.is_empty() {
            t.absent.push(style);
            continue;
        }
        let n = m.len() as f64;
        let mean = m.iter().sum::<f64>() / n;
        let std = (m.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        t.rows.push(F0Row { style, mean, std, count: m.len() });
    }
    t
}

pub fn f0_statistics(groups: &BTreeMap<StyleLabel, Vec<Waveform>>) -> Result<F0StatsTable> {
    let means = groups
        .iter()
        .map(|(&s, waves)| Ok((s, waves.iter().map(voiced_mean).collect::<Result<Vec<_>>>()?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(f0_table_from_means(&means))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std_and_absent_rows() {
        let mut g = BTreeMap::new();
        g.insert(StyleLabel::Happy, vec![Some(200.0), Some(220.0), None]);
        g.insert(StyleLabel::Neutral, vec![Some(180.0)]);
        g.insert(StyleLabel::Sad, vec![None]);
        let t = f0_table_from_means(&g);
        let h = t.get(StyleLabel::Happy).unwrap();
        assert_eq!((h.mean, h.std, h.count), (210.0, 10.0, 2));
        assert_eq!(t.get(StyleLabel::Neutral).unwrap().std, 0.0);
        assert_eq!(t.absent, [StyleLabel::Sad]);
    }

    #[test]
    fn silence_is_absent() {
        let mut g = BTreeMap::new();
        g.insert(StyleLabel::Soft, vec![Waveform::new(vec![0.0; 4800], 24_000)]);
        assert_eq!(f0_statistics(&g).unwrap().absent, [StyleLabel::Soft]);
    }
}
