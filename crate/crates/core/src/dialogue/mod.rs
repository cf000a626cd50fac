//! Per-turn response selection: retrieve, build candidates, score them
//! against the conversation, and fall back to chit-chat below threshold.

mod session;

use std::cmp::Ordering;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use session::{Role, Session, SessionSnapshot, SessionStore, Utterance};

use crate::candidates::{generate_candidates, CandidateKind};
use crate::chitchat::{ChitChat, DecodeConfig};
use crate::docstore::DocStore;
use crate::error::{Error, Result};
use crate::matcher::MatcherModel;
use crate::retrieval::RetrievalConfig;

/// Scores candidate replies against a context, oldest utterance first.
pub trait Scorer: Send + Sync {
    fn score(&self, context: &[String], candidates: &[String]) -> Result<Vec<f64>>;
}

impl Scorer for MatcherModel {
    fn score(&self, context: &[String], candidates: &[String]) -> Result<Vec<f64>> {
        self.score_texts(context, candidates)
    }
}

/// Produces a fallback reply for a message.
pub trait ReplyGenerator: Send + Sync {
    fn reply(&self, message: &str) -> String;

    fn model_loaded(&self) -> bool {
        false
    }
}

impl ReplyGenerator for ChitChat {
    fn reply(&self, message: &str) -> String {
        ChitChat::reply(self, message)
    }

    fn model_loaded(&self) -> bool {
        ChitChat::model_loaded(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManagerConfig {
    /// A candidate is used when its score is at least this.
    pub score_threshold: f64,
    pub retrieval: RetrievalConfig,
    pub decode: DecodeConfig,
    /// Most utterances passed to the scorer; the session keeps twice this.
    pub max_utterances: usize,
    /// Whether bot replies are part of the scored context.
    pub include_bot_turns: bool,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        ManagerConfig {
            score_threshold: 0.3,
            retrieval: RetrievalConfig::default(),
            decode: DecodeConfig::default(),
            max_utterances: 10,
            include_bot_turns: true,
        }
    }
}

impl ManagerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::Config(format!(
                "score_threshold must be in [0, 1], got {}",
                self.score_threshold
            )));
        }
        if self.max_utterances == 0 {
            return Err(Error::Config("max_utterances must be at least 1".into()));
        }
        self.retrieval.validate()?;
        self.decode.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Matched,
    Chitchat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub text: String,
    pub kind: CandidateKind,
    pub doc_id: String,
    pub sentence_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDecision {
    pub reply: String,
    pub origin: Origin,
    /// Best candidate score, when any candidate was scored.
    pub score: Option<f64>,
    /// Scored candidates, highest first; ties keep candidate order.
    pub candidate_trace: Vec<TraceEntry>,
}

/// Index of the first maximal score when it reaches `threshold`.
pub fn select_candidate(scores: &[f64], threshold: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best.filter(|&b| scores[b] >= threshold)
}

pub struct DialogueManager {
    docs: Arc<DocStore>,
    sessions: SessionStore,
    scorer: Option<Arc<dyn Scorer>>,
    chitchat: Arc<dyn ReplyGenerator>,
    config: ManagerConfig,
}

impl std::fmt::Debug for DialogueManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DialogueManager")
            .field("documents", &self.docs.len())
            .field("sessions", &self.sessions.len())
            .field("scorer", &self.scorer.is_some())
            .field("config", &self.config)
            .finish()
    }
}

impl DialogueManager {
    /// Without a scorer every message is answered by `chitchat`.
    pub fn new(
        docs: Arc<DocStore>,
        scorer: Option<Arc<dyn Scorer>>,
        chitchat: Arc<dyn ReplyGenerator>,
        config: ManagerConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(DialogueManager {
            docs,
            sessions: SessionStore::default(),
            scorer,
            chitchat,
            config,
        })
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.config
    }

    pub fn documents(&self) -> &Arc<DocStore> {
        &self.docs
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    pub fn matcher_loaded(&self) -> bool {
        self.scorer.is_some()
    }

    pub fn chitchat_loaded(&self) -> bool {
        self.chitchat.model_loaded()
    }

    /// Opens a session over `doc_ids`, which must all be ingested.
    pub fn create_session(&self, doc_ids: Vec<String>) -> Result<SessionSnapshot> {
        let mut ids: Vec<String> = Vec::with_capacity(doc_ids.len());
        for id in doc_ids {
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
        let index = self.docs.combined_index(&ids)?;
        let session = Session::new(ids, index, 2 * self.config.max_utterances);
        let snapshot = session.snapshot();
        self.sessions.insert(session);
        Ok(snapshot)
    }

    pub fn session(&self, id: &str) -> Result<SessionSnapshot> {
        self.sessions
            .get(id)
            .map(|s| s.lock().snapshot())
            .ok_or_else(|| Error::SessionNotFound(id.into()))
    }

    pub fn expire_idle(&self, ttl: Duration) -> usize {
        self.sessions.expire_idle(ttl)
    }

    /// Handles one user message. Messages to the same session are
    /// serialized; different sessions run concurrently.
    pub fn handle_message(&self, session_id: &str, text: &str) -> Result<ResponseDecision> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Usage("message text is empty".into()));
        }
        let entry = self
            .sessions
            .get(session_id)
            .ok_or_else(|| Error::SessionNotFound(session_id.into()))?;
        let mut session = entry.lock();
        let decision = self.respond(&mut session, text);
        session.push(Role::Bot, decision.reply.clone());
        Ok(decision)
    }

    /// Appends `text` as a user turn and decides the reply, without
    /// recording the reply.
    pub fn respond(&self, session: &mut Session, text: &str) -> ResponseDecision {
        session.push(Role::User, text);
        let trace = self.score_candidates(session, text);
        let scores: Vec<f64> = trace.iter().map(|t| t.score).collect();
        let best = scores.first().copied();
        match select_candidate(&scores, self.config.score_threshold) {
            Some(i) => ResponseDecision {
                reply: trace[i].text.clone(),
                origin: Origin::Matched,
                score: best,
                candidate_trace: trace,
            },
            None => ResponseDecision {
                reply: self.chitchat.reply(text),
                origin: Origin::Chitchat,
                score: best,
                candidate_trace: trace,
            },
        }
    }

    /// Candidates for the newest message with their scores, highest first.
    /// Empty when nothing is retrieved, no scorer is loaded, or scoring
    /// fails.
    fn score_candidates(&self, session: &Session, text: &str) -> Vec<TraceEntry> {
        let (Some(index), Some(scorer)) = (&session.index, &self.scorer) else {
            return Vec::new();
        };
        let retrieved = index.retrieve_top_k(&self.docs.pipeline().tokenizer, text, &self.config.retrieval);
        let candidates = generate_candidates(&retrieved);
        if candidates.is_empty() {
            return Vec::new();
        }
        let context = self.context(session);
        let scores = match scorer.score(&context, &candidates.texts()) {
            Ok(s) if s.len() == candidates.len() && s.iter().all(|x| x.is_finite()) => s,
            _ => return Vec::new(),
        };
        let mut trace: Vec<TraceEntry> = candidates
            .iter()
            .zip(scores)
            .map(|(c, score)| TraceEntry {
                text: c.text.clone(),
                kind: c.kind,
                doc_id: c.doc_id.clone(),
                sentence_index: c.sentence_index,
                score,
            })
            .collect();
        trace.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
        trace
    }

    /// The newest `max_utterances` history entries, oldest first.
    pub fn context(&self, session: &Session) -> Vec<String> {
        let mut ctx: Vec<String> = session
            .history()
            .rev()
            .filter(|u| self.config.include_bot_turns || u.role == Role::User)
            .take(self.config.max_utterances)
            .map(|u| u.text.clone())
            .collect();
        ctx.reverse();
        ctx
    }
}
