//! Listening-test construction and scoring, plus F0 statistics.

pub mod abx;
pub mod f0_stats;
pub mod preference;
pub mod query_match;
pub mod report;
pub mod stimuli;

pub use abx::{build_abx, score_abx, AbxAnswer, AbxItem, AbxScore, Choice, PairScore};
pub use f0_stats::{f0_statistics, f0_table_from_means, voiced_mean, F0Row, F0StatsTable};
pub use preference::{
    build_preference, preference_from_counts, score_preference, score_preference_answers, Condition, PreferenceAnswer,
    PreferenceItem, PreferencePlan, PreferenceScore,
};
pub use query_match::{score_query_match, Judgment, QueryMatchAnswer, QueryMatchItem, QueryMatchScore};
pub use report::{read_jsonl, write_jsonl};
pub use stimuli::{build_abx_pool, build_preference_pool, build_query_pool, write_pool, MediaWriter, PoolSummary, QueryInput};
