use std::collections::{HashMap, VecDeque};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::retrieval::SentenceIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub role: Role,
    pub text: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

pub(crate) fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub doc_ids: Vec<String>,
    pub(crate) index: Option<Arc<SentenceIndex>>,
    history: VecDeque<Utterance>,
    capacity: usize,
    created_at: u64,
    last_active_at: u64,
    last_active: Instant,
}

/// Serializable view of a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub doc_ids: Vec<String>,
    pub history: Vec<Utterance>,
    pub created_at: u64,
    pub last_active: u64,
}

impl Session {
    pub(crate) fn new(doc_ids: Vec<String>, index: Option<Arc<SentenceIndex>>, capacity: usize) -> Self {
        let now = now_millis();
        Session {
            id: uuid::Uuid::new_v4().to_string(),
            doc_ids,
            index,
            history: VecDeque::new(),
            capacity: capacity.max(1),
            created_at: now,
            last_active_at: now,
            last_active: Instant::now(),
        }
    }

    /// Appends an utterance, dropping the oldest beyond the window.
    pub fn push(&mut self, role: Role, text: impl Into<String>) {
        self.touch();
        self.history.push_back(Utterance {
            role,
            text: text.into(),
            timestamp: self.last_active_at,
        });
        while self.history.len() > self.capacity {
            self.history.pop_front();
        }
    }

    pub fn touch(&mut self) {
        self.last_active = Instant::now();
        self.last_active_at = now_millis();
    }

    pub fn history(&self) -> impl DoubleEndedIterator<Item = &Utterance> + ExactSizeIterator {
        self.history.iter()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn idle_for(&self) -> Duration {
        self.last_active.elapsed()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.id.clone(),
            doc_ids: self.doc_ids.clone(),
            history: self.history.iter().cloned().collect(),
            created_at: self.created_at,
            last_active: self.last_active_at,
        }
    }
}

/// Sessions by id, each behind its own lock so one conversation never
/// blocks another.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn insert(&self, session: Session) -> Arc<Mutex<Session>> {
        let id = session.id.clone();
        let entry = Arc::new(Mutex::new(session));
        self.sessions.write().insert(id, entry.clone());
        entry
    }

    pub fn get(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.read().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.read().is_empty()
    }

    /// Drops sessions idle for at least `ttl`; a zero ttl drops them all.
    /// A session locked by an in-flight message is busy, not idle, and is
    /// kept. Returns the number removed.
    pub fn expire_idle(&self, ttl: Duration) -> usize {
        let mut map = self.sessions.write();
        let before = map.len();
        map.retain(|_, s| match s.try_lock() {
            Some(s) => s.idle_for() < ttl,
            None => true,
        });
        before - map.len()
    }
}
