//! Hand-built style embeddings.

use std::collections::BTreeMap;

use crate::corpus::{StyleLabel, NUM_STYLES};
use crate::error::{Error, Result};
use crate::style_model::StyleEmbedding;

pub const SELECTED_WEIGHT: f64 = 0.95;
pub const OTHER_WEIGHT: f64 = 0.01;

/// 0.95 on `style`, 0.01 on each of the other five.
pub fn one_hot_embedding(style: StyleLabel) -> StyleEmbedding {
    let mut p = [OTHER_WEIGHT; NUM_STYLES];
    p[style.index()] = SELECTED_WEIGHT;
    StyleEmbedding(p)
}

/// Parses a canonical style name and builds its 0.95/0.01 embedding.
pub fn make_style_embedding(name: &str) -> Result<StyleEmbedding> {
    Ok(one_hot_embedding(name.trim().parse()?))
}

/// Normalizes non-negative weights to a probability vector. Styles that are
/// not mentioned get zero.
pub fn mix_style_embedding(weights: &BTreeMap<StyleLabel, f64>) -> Result<StyleEmbedding> {
    let mut p = [0.0; NUM_STYLES];
    for (&s, &w) in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::invalid(format!("weight for {s} must be finite and non-negative, got {w}")));
        }
        p[s.index()] = w;
    }
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("style weights are all zero"));
    }
    p.iter_mut().for_each(|v| *v /= total);
    StyleEmbedding::new(p)
}

/// Parses `happy:3,neutral:1` into a weight map.
pub fn parse_style_weights(spec: &str) -> Result<BTreeMap<StyleLabel, f64>> {
    let mut out = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, w) = part
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("expected style:weight, got `{part}`")))?;
        let w: f64 = w.trim().parse().map_err(|_| Error::invalid(format!("bad weight in `{part}`")))?;
        if out.insert(name.trim().parse()?, w).is_some() {
            return Err(Error::invalid(format!("style `{}` given twice", name.trim())));
        }
    }
    Ok(out)
}
