//! The pre-synthesized listening-test pool.

use std::path::{Path, PathBuf};

use mimic_core::evalkit::stimuli::{ABX_FILE, MEDIA_DIR, PREFERENCE_FILE, QUERY_MATCH_FILE};
use mimic_core::evalkit::{read_jsonl, AbxItem, PreferenceItem, QueryMatchItem};

use crate::store::TestKind;
use crate::ServiceError;

#[derive(Debug, Clone, Default)]
pub struct TestPool {
    pub abx: Vec<AbxItem>,
    pub preference: Vec<PreferenceItem>,
    pub query_match: Vec<QueryMatchItem>,
    pub media_dir: PathBuf,
}

impl TestPool {
    /// Missing item files give empty lists.
    pub fn load(dir: &Path) -> Result<Self, ServiceError> {
        Ok(Self {
            abx: read_jsonl(&dir.join(ABX_FILE))?,
            preference: read_jsonl(&dir.join(PREFERENCE_FILE))?,
            query_match: read_jsonl(&dir.join(QUERY_MATCH_FILE))?,
            media_dir: dir.join(MEDIA_DIR),
        })
    }

    pub fn item_ids(&self, kind: TestKind) -> Vec<String> {
        match kind {
            TestKind::Abx => self.abx.iter().map(|i| i.id.clone()).collect(),
            TestKind::Preference => self.preference.iter().map(|i| i.id.clone()).collect(),
            TestKind::QueryMatch => self.query_match.iter().map(|i| i.id.clone()).collect(),
        }
    }

    pub fn query(&self, id: &str) -> Option<&QueryMatchItem> {
        self.query_match.iter().find(|q| q.id == id)
    }
}
