//! Per-corpus z-score statistics for MFCC frames and prosody vectors.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mfcc::MFCC_DIM;
use super::prosody::PROSODY_DIM;
use crate::error::{Error, Result};
use crate::nn::Mat;

pub const EPSILON: f64 = 1e-8;

/// Which feature streams are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    None,
    Mfcc,
    Prosody,
    #[default]
    Both,
}

impl NormMode {
    pub const ALL: [NormMode; 4] = [NormMode::None, NormMode::Mfcc, NormMode::Prosody, NormMode::Both];

    pub fn mfcc(self) -> bool {
        matches!(self, NormMode::Mfcc | NormMode::Both)
    }

    pub fn prosody(self) -> bool {
        matches!(self, NormMode::Prosody | NormMode::Both)
    }

    pub fn name(self) -> &'static str {
        match self {
            NormMode::None => "none",
            NormMode::Mfcc => "mfcc",
            NormMode::Prosody => "prosody",
            NormMode::Both => "both",
        }
    }
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NormMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown normalization mode `{s}` (none|mfcc|prosody|both)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub corpus_id: String,
    pub mfcc_mean: Vec<f64>,
    pub mfcc_std: Vec<f64>,
    pub prosody_mean: Vec<f64>,
    pub prosody_std: Vec<f64>,
    pub epsilon: f64,
}

fn mean_std<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let mut n = 0usize;
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for r in rows {
        n += 1;
        for ((s, q), v) in sum.iter_mut().zip(sq.iter_mut()).zip(r) {
            *s += v;
            *q += v * v;
        }
    }
    let nf = n.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std = sq.iter().zip(&mean).map(|(q, m)| (q / nf - m * m).max(0.0).sqrt()).collect();
    (mean, std, n)
}

impl NormStats {
    /// Fits statistics from one corpus: MFCC stats pool every frame of every
    /// utterance, prosody stats pool the utterance vectors.
    pub fn fit(corpus_id: &str, mfccs: &[&Mat], prosody: &[&[f64]]) -> Result<Self> {
        if mfccs.len() < 2 || prosody.len() < 2 {
            return Err(Error::invalid(format!(
                "normalization for `{corpus_id}` needs at least two utterances, got {}",
                mfccs.len().min(prosody.len())
            )));
        }
        for m in mfccs {
            if m.cols != MFCC_DIM {
                return Err(Error::Shape(format!("MFCC width {} != {MFCC_DIM}", m.cols)));
            }
        }
        for p in prosody {
            if p.len() != PROSODY_DIM {
                return Err(Error::Shape(format!("prosody width {} != {PROSODY_DIM}", p.len())));
            }
        }
        let (mfcc_mean, mfcc_std, frames) =
            mean_std(mfccs.iter().flat_map(|m| (0..m.rows).map(move |r| m.row(r))), MFCC_DIM);
        if frames == 0 {
            return Err(Error::invalid(format!("corpus `{corpus_id}` has no MFCC frames")));
        }
        let (prosody_mean, prosody_std, _) = mean_std(prosody.iter().copied(), PROSODY_DIM);
        let clamp = |v: Vec<f64>| v.into_iter().map(|s| s.max(EPSILON)).collect::<Vec<_>>();
        let (mfcc_std, prosody_std) = (clamp(mfcc_std), clamp(prosody_std));
        Ok(Self { corpus_id: corpus_id.to_string(), mfcc_mean, mfcc_std, prosody_mean, prosody_std, epsilon: EPSILON })
    }

    pub fn apply_mfcc(&self, m: &Mat) -> Mat {
        let mut out = m.clone();
        for r in 0..out.rows {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mfcc_mean[c]) / self.mfcc_std[c].max(self.epsilon);
            }
        }
        out
    }

    pub fn apply_prosody(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(c, v)| (v - self.prosody_mean[c]) / self.prosody_std[c].max(self.epsilon))
            .collect()
    }

    /// Applies the streams selected by `mode`.
    pub fn apply(&self, mode: NormMode, mfcc: &Mat, prosody: &[f64]) -> (Mat, Vec<f64>) {
        (
            if mode.mfcc() { self.apply_mfcc(mfcc) } else { mfcc.clone() },
            if mode.prosody() { self.apply_prosody(prosody) } else { prosody.to_vec() },
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let stats: NormStats = serde_json::from_str(&s)?;
        if stats.mfcc_mean.len() != MFCC_DIM
            || stats.mfcc_std.len() != MFCC_DIM
            || stats.prosody_mean.len() != PROSODY_DIM
            || stats.prosody_std.len() != PROSODY_DIM
        {
            return Err(Error::Shape(format!("{}: statistics have the wrong width", path.display())));
        }
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seed: f64, rows: usize) -> (Mat, Vec<f64>) {
        let m = Mat::from_vec(rows, MFCC_DIM, (0..rows * MFCC_DIM).map(|i| (i as f64 * 0.37 + seed).sin() * 5.0).collect());
        let p = (0..PROSODY_DIM).map(|i| seed * (i as f64 + 1.0)).collect();
        (m, p)
    }

    #[test]
    fn normalized_training_data_is_standard() {
        let data: Vec<_> = (0..5).map(|i| sample(i as f64, 10 + i)).collect();
        let ms: Vec<&Mat> = data.iter().map(|d| &d.0).collect();
        let ps: Vec<&[f64]> = data.iter().map(|d| d.1.as_slice()).collect();
        let st = NormStats::fit("c", &ms, &ps).unwrap();
        let normed: Vec<Mat> = ms.iter().map(|m| st.apply_mfcc(m)).collect();
        let refs: Vec<&[f64]> = normed.iter().flat_map(|m| (0..m.rows).map(move |r| m.row(r))).collect();
        let (mean, std, _) = mean_std(refs.into_iter(), MFCC_DIM);
        for c in 0..MFCC_DIM {
            assert!(mean[c].abs() < 1e-9);
            assert!((std[c] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn hand_z_score() {
        let mut m = Mat::zeros(3, MFCC_DIM);
        for r in 0..3 {
            m.set(r, 0, r as f64 + 1.0);
        }
        let p = vec![0.0; PROSODY_DIM];
        let st = NormStats::fit("c", &[&m, &m], &[&p, &p]).unwrap();
        let z = st.apply_mfcc(&m);
        for (r, want) in [-1.224744871391589, 0.0, 1.224744871391589].iter().enumerate() {
            assert!((z.get(r, 0) - want).abs() < 1e-12);
        }
        assert!(st.mfcc_std.iter().all(|&s| s >= EPSILON));
    }

    #[test]
    fn refit_on_normalized_data_is_identity() {
        let data: Vec<_> = (0..4).map(|i| sample(i as f64 + 0.5, 6)).collect();
        let ms: Vec<&Mat> = data.iter().map(|d| &d.0).collect();
        let ps: Vec<&[f64]> = data.iter().map(|d| d.1.as_slice()).collect();
        let st = NormStats::fit("c", &ms, &ps).unwrap();
        let nm: Vec<Mat> = ms.iter().map(|m| st.apply_mfcc(m)).collect();
        let np: Vec<Vec<f64>> = ps.iter().map(|p| st.apply_prosody(p)).collect();
        let st2 = NormStats::fit("c", &nm.iter().collect::<Vec<_>>(), &np.iter().map(|p| p.as_slice()).collect::<Vec<_>>()).unwrap();
        for (m, again) in nm.iter().zip(nm.iter().map(|m| st2.apply_mfcc(m))) {
            for (a, b) in m.data.iter().zip(&again.data) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_dimension_stays_finite() {
        let (m, _) = sample(0.0, 4);
        let p = vec![3.0; PROSODY_DIM];
        let st = NormStats::fit("c", &[&m, &m], &[&p, &p]).unwrap();
        assert!(st.apply_prosody(&p).iter().all(|v| v.is_finite() && v.abs() < 1e-9));
    }

    #[test]
    fn too_few_utterances() {
        let (m, p) = sample(1.0, 3);
        assert!(NormStats::fit("c", &[&m], &[&p]).is_err());
        assert!(NormStats::fit("c", &[], &[]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let a = sample(1.0, 3);
        let b = sample(2.0, 4);
        let st = NormStats::fit("c", &[&a.0, &b.0], &[&a.1, &b.1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.json");
        st.save(&path).unwrap();
        assert_eq!(NormStats::load(&path).unwrap(), st);
    }

    #[test]
    fn mode_parsing() {
        for m in NormMode::ALL {
            assert_eq!(m.name().parse::<NormMode>().unwrap(), m);
        }
        assert!("all".parse::<NormMode>().is_err());
    }
}
