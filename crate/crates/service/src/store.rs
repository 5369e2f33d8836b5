//! Sessions and the append-only answer log.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use mimic_core::evalkit::read_jsonl;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const ANSWERS_FILE: &str = "answers.jsonl";
pub const SESSIONS_FILE: &str = "sessions.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Abx,
    Preference,
    QueryMatch,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::Abx, TestKind::Preference, TestKind::QueryMatch];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Abx => "abx",
            TestKind::Preference => "preference",
            TestKind::QueryMatch => "query_match",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub test_kind: TestKind,
    /// Item ids in serving order, fixed at creation.
    pub items: Vec<String>,
    pub created_at: u64,
}

/// One line of the answer log. `choice` holds the scored value: A/B for
/// ABX, the preferred condition for preference, good/bad for query match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub kind: TestKind,
    pub session_id: String,
    pub item_id: String,
    pub choice: String,
    pub timestamp: u64,
}

pub fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accept {
    /// Answers recorded for the session so far.
    Recorded { answered: usize, total: usize },
}

/// Owns the data directory. Callers serialize access through one mutex, so
/// appends never interleave.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    sessions: BTreeMap<String, Session>,
    answered: BTreeMap<String, HashSet<String>>,
    log: File,
}

impl Store {
    /// Opens or creates the directory and replays the answer log.
    pub fn open(dir: &Path) -> Result<Self, ServiceError> {
        fs::create_dir_all(dir).map_err(|e| ServiceError::io(dir, e))?;
        let sessions_path = dir.join(SESSIONS_FILE);
        let sessions: BTreeMap<String, Session> = match fs::read_to_string(&sessions_path) {
            Ok(t) => serde_json::from_str::<Vec<Session>>(&t)
                .map_err(|e| ServiceError::Config(format!("{}: {e}", sessions_path.display())))?
                .into_iter()
                .map(|s| (s.session_id.clone(), s))
                .collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(ServiceError::io(&sessions_path, e)),
        };
        let log_path = dir.join(ANSWERS_FILE);
        let mut answered: BTreeMap<String, HashSet<String>> = BTreeMap::new();
        for r in read_jsonl::<AnswerRecord>(&log_path)? {
            answered.entry(r.session_id).or_default().insert(r.item_id);
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path).map_err(|e| ServiceError::io(&log_path, e))?;
        Ok(Self { dir: dir.to_path_buf(), sessions, answered, log })
    }

    pub fn answers_path(&self) -> PathBuf {
        self.dir.join(ANSWERS_FILE)
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn create_session(&mut self, kind: TestKind, items: Vec<String>) -> Result<Session, ServiceError> {
        let session_id = loop {
            let id = format!("{:032x}", rand::random::<u128>());
            if !self.sessions.contains_key(&id) {
                break id;
            }
        };
        let s = Session { session_id: session_id.clone(), test_kind: kind, items, created_at: now_secs() };
        self.sessions.insert(session_id, s.clone());
        self.write_sessions()?;
        Ok(s)
    }

    fn write_sessions(&self) -> Result<(), ServiceError> {
        let path = self.dir.join(SESSIONS_FILE);
        let tmp = self.dir.join(format!("{SESSIONS_FILE}.tmp"));
        let all: Vec<&Session> = self.sessions.values().collect();
        let text = serde_json::to_string_pretty(&all).map_err(|e| ServiceError::Config(e.to_string()))?;
        fs::write(&tmp, text).map_err(|e| ServiceError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| ServiceError::io(&path, e))
    }

    pub fn answered(&self, session_id: &str) -> usize {
        self.answered.get(session_id).map_or(0, HashSet::len)
    }

    /// First unanswered item, or `None` when the session is complete.
    pub fn next_item<'a>(&self, session: &'a Session) -> Option<(usize, &'a str)> {
        let done = self.answered.get(&session.session_id);
        session
            .items
            .iter()
            .enumerate()
            .find(|(_, id)| done.is_none_or(|d| !d.contains(*id)))
            .map(|(i, id)| (i, id.as_str()))
    }

    /// Validates and appends one answer as a single write.
    pub fn record(&mut self, session_id: &str, item_id: &str, choice: String) -> Result<Accept, ServiceError> {
        let session = self.sessions.get(session_id).ok_or_else(|| ServiceError::NotFound(format!("session {session_id}")))?;
        if !session.items.iter().any(|i| i == item_id) {
            return Err(ServiceError::NotFound(format!("item {item_id} in session {session_id}")));
        }
        let done = self.answered.get(session_id);
        if done.is_some_and(|d| d.contains(item_id)) {
            return Err(ServiceError::Duplicate(format!("item {item_id} already answered")));
        }
        let total = session.items.len();
        let rec = AnswerRecord { kind: session.test_kind, session_id: session_id.into(), item_id: item_id.into(), choice, timestamp: now_secs() };
        let mut line = serde_json::to_vec(&rec).map_err(|e| ServiceError::Config(e.to_string()))?;
        line.push(b'\n');
        let path = self.answers_path();
        self.log.write_all(&line).map_err(|e| ServiceError::io(&path, e))?;
        self.log.flush().map_err(|e| ServiceError::io(&path, e))?;
        let set = self.answered.entry(session_id.into()).or_default();
        set.insert(item_id.into());
        Ok(Accept::Recorded { answered: set.len(), total })
    }

    /// Re-reads the log from disk.
    pub fn read_log(&self) -> Result<Vec<AnswerRecord>, ServiceError> {
        Ok(read_jsonl(&self.answers_path())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        let sess = s.create_session(TestKind::Abx, vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(s.next_item(&sess), Some((0, "a")));
        s.record(&sess.session_id, "b", "A".into()).unwrap();
        assert_eq!(s.next_item(&sess), Some((0, "a")));
        assert!(matches!(s.record(&sess.session_id, "b", "B".into()), Err(ServiceError::Duplicate(_))));
        assert!(matches!(s.record(&sess.session_id, "zz", "B".into()), Err(ServiceError::NotFound(_))));
        assert!(matches!(s.record("nope", "a", "B".into()), Err(ServiceError::NotFound(_))));
        drop(s);
        let mut s = Store::open(dir.path()).unwrap();
        let sess = s.session(&sess.session_id).unwrap().clone();
        assert_eq!(s.answered(&sess.session_id), 1);
        assert_eq!(s.record(&sess.session_id, "a", "B".into()).unwrap(), Accept::Recorded { answered: 2, total: 2 });
        assert_eq!(s.next_item(&sess), None);
        assert_eq!(s.read_log().unwrap().len(), 2);
    }
}
