//! Listener judgments of whether a response's style matches its query.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::style_model::StyleEmbedding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Judgment {
    Good,
    Bad,
}

impl std::str::FromStr for Judgment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "good" => Ok(Judgment::Good),
            "bad" => Ok(Judgment::Bad),
            _ => Err(Error::invalid(format!("judgment must be good or bad, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMatchItem {
    pub id: String,
    pub query_text: String,
    pub response_text: String,
    pub query_audio: String,
    pub response_audio: String,
    /// Embedding extracted from the query and used for the response.
    pub embedding: StyleEmbedding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryMatchAnswer {
    pub session_id: String,
    pub item_id: String,
    pub choice: Judgment,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMatchScore {
    pub good: usize,
    pub total: usize,
    /// Percent judged a good match.
    pub rate: f64,
}

pub fn score_query_match(judgments: &[Judgment]) -> Result<QueryMatchScore> {
    if judgments.is_empty() {
        return Err(Error::invalid("no query-match judgments to score"));
    }
    let good = judgments.iter().filter(|&&j| j == Judgment::Good).count();
    Ok(QueryMatchScore { good, total: judgments.len(), rate: 100.0 * good as f64 / judgments.len() as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn js(good: usize, total: usize) -> Vec<Judgment> {
        (0..total).map(|i| if i < good { Judgment::Good } else { Judgment::Bad }).collect()
    }

    #[test]
    fn rates() {
        assert_eq!(score_query_match(&js(8, 20)).unwrap().rate, 40.0);
        assert_eq!(score_query_match(&js(3, 3)).unwrap().rate, 100.0);
        assert_eq!(score_query_match(&js(0, 4)).unwrap().rate, 0.0);
        assert!(score_query_match(&[]).is_err());
    }
}
