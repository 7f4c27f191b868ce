use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::corpus::{DatasetManifest, Label, Split};
use crate::genpipe::stable_hash;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaygroundItem {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub domain: String,
}

/// Held-out texts served to players.
#[derive(Debug, Clone, Default)]
pub struct PlaygroundPool {
    items: Vec<PlaygroundItem>,
}

impl PlaygroundPool {
    pub fn new(items: Vec<PlaygroundItem>) -> Self {
        PlaygroundPool { items }
    }

    /// The test split of a manifest; training and dev texts never enter.
    pub fn from_manifest(m: &DatasetManifest) -> Self {
        let items = m
            .entries
            .iter()
            .filter(|e| e.split == Some(Split::Test))
            .map(|e| PlaygroundItem { id: e.id.clone(), text: e.text.clone(), label: e.label, domain: e.domain.clone() })
            .collect();
        PlaygroundPool { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[PlaygroundItem] {
        &self.items
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Score {
    pub correct: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session: String,
    pub score: Score,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

/// An item as shown to the player. Carries no label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub session: String,
    pub item: String,
    pub text: String,
    pub domain: String,
    /// Items served to this session so far, including this one.
    pub served: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuessRequest {
    pub session: String,
    pub item: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuessResponse {
    pub verdict: Verdict,
    pub truth: Label,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ServedItem {
    index: usize,
    scored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionState {
    id: String,
    domain: Option<String>,
    rng: ChaCha8Rng,
    /// Unserved pool indices per label code.
    remaining: [Vec<usize>; 4],
    order: [Label; 4],
    cursor: usize,
    served: HashMap<String, ServedItem>,
    served_count: usize,
    score: Score,
}

impl SessionState {
    fn new(id: String, domain: Option<String>, pool: &PlaygroundPool, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(id.as_bytes()));
        let mut remaining: [Vec<usize>; 4] = Default::default();
        for (i, item) in pool.items.iter().enumerate() {
            if domain.as_deref().is_none_or(|d| d == item.domain) {
                remaining[item.label.code()].push(i);
            }
        }
        let mut order = Label::ALL;
        order.shuffle(&mut rng);
        SessionState {
            id,
            domain,
            rng,
            remaining,
            order,
            cursor: 0,
            served: HashMap::new(),
            served_count: 0,
            score: Score::default(),
        }
    }

    /// Round-robin over the labels in a per-round shuffled order, skipping
    /// labels with nothing left; uniform draw within the label.
    fn next_index(&mut self) -> Option<usize> {
        if self.remaining.iter().all(Vec::is_empty) {
            return None;
        }
        loop {
            let label = self.order[self.cursor];
            self.cursor += 1;
            if self.cursor == Label::COUNT {
                self.cursor = 0;
                self.order.shuffle(&mut self.rng);
            }
            let bucket = &mut self.remaining[label.code()];
            if !bucket.is_empty() {
                let k = self.rng.random_range(0..bucket.len());
                return Some(bucket.swap_remove(k));
            }
        }
    }
}

struct Session {
    state: SessionState,
    last_seen: Instant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    sessions: Vec<SessionState>,
}

impl SessionSnapshot {
    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}

/// In-memory playground sessions with idle eviction. Each session has its
/// own lock, so operations on one session are serialized while different
/// sessions proceed independently.
pub struct SessionStore {
    pool: Arc<PlaygroundPool>,
    seed: u64,
    ttl: Duration,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl SessionStore {
    pub fn new(pool: Arc<PlaygroundPool>, seed: u64, ttl: Duration) -> Self {
        SessionStore { pool, seed, ttl, sessions: Mutex::new(HashMap::new()) }
    }

    pub fn pool(&self) -> &PlaygroundPool {
        &self.pool
    }

    pub fn len(&self) -> usize {
        lock(&self.sessions).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        lock(&self.sessions).get(id).cloned().ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    /// Registers a session under a caller-chosen id (the server uses random
    /// ids; tests use fixed ones). Idle sessions are evicted first.
    pub fn create(&self, id: impl Into<String>, domain: Option<String>) -> Result<SessionInfo, ServiceError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ServiceError::BadRequest("session id must not be empty".into()));
        }
        self.evict_idle();
        let mut sessions = lock(&self.sessions);
        if sessions.contains_key(&id) {
            return Err(ServiceError::BadRequest(format!("session {id:?} already exists")));
        }
        let state = SessionState::new(id.clone(), domain.clone(), &self.pool, self.seed);
        sessions.insert(id.clone(), Arc::new(Mutex::new(Session { state, last_seen: Instant::now() })));
        Ok(SessionInfo { session: id, score: Score::default(), domain })
    }

    pub fn sample(&self, id: &str) -> Result<SampleResponse, ServiceError> {
        let handle = self.session(id)?;
        let mut s = lock(&handle);
        s.last_seen = Instant::now();
        let st = &mut s.state;
        let index = st.next_index().ok_or(ServiceError::Exhausted)?;
        let item = &self.pool.items[index];
        st.served.insert(item.id.clone(), ServedItem { index, scored: false });
        st.served_count += 1;
        Ok(SampleResponse {
            session: st.id.clone(),
            item: item.id.clone(),
            text: item.text.clone(),
            domain: item.domain.clone(),
            served: st.served_count,
        })
    }

    pub fn guess(&self, req: &GuessRequest) -> Result<GuessResponse, ServiceError> {
        let handle = self.session(&req.session)?;
        let mut s = lock(&handle);
        s.last_seen = Instant::now();
        let st = &mut s.state;
        let served = st.served.get_mut(&req.item).ok_or_else(|| ServiceError::UnknownItem(req.item.clone()))?;
        if served.scored {
            return Err(ServiceError::AlreadyScored(req.item.clone()));
        }
        served.scored = true;
        let truth = self.pool.items[served.index].label;
        let verdict = if truth == req.label { Verdict::Correct } else { Verdict::Incorrect };
        st.score.total += 1;
        if verdict == Verdict::Correct {
            st.score.correct += 1;
        }
        Ok(GuessResponse { verdict, truth, score: st.score })
    }

    pub fn info(&self, id: &str) -> Result<SessionInfo, ServiceError> {
        let handle = self.session(id)?;
        let mut s = lock(&handle);
        s.last_seen = Instant::now();
        Ok(SessionInfo { session: s.state.id.clone(), score: s.state.score, domain: s.state.domain.clone() })
    }

    /// Drops sessions idle for longer than the store's TTL; returns how many.
    pub fn evict_idle(&self) -> usize {
        let now = Instant::now();
        let mut sessions = lock(&self.sessions);
        let before = sessions.len();
        sessions.retain(|_, s| now.duration_since(lock(s).last_seen) <= self.ttl);
        before - sessions.len()
    }

    /// Sessions sorted by id.
    pub fn snapshot(&self) -> SessionSnapshot {
        let handles: Vec<_> = lock(&self.sessions).values().cloned().collect();
        let mut sessions: Vec<SessionState> = handles.iter().map(|h| lock(h).state.clone()).collect();
        sessions.sort_by(|a, b| a.id.cmp(&b.id));
        SessionSnapshot { sessions }
    }

    /// Adds the snapshot's sessions, replacing any with the same id. Served
    /// indices must fit the current pool.
    pub fn restore(&self, snapshot: SessionSnapshot) -> Result<usize, ServiceError> {
        let n = self.pool.len();
        for st in &snapshot.sessions {
            let bad = st.served.values().map(|s| s.index).chain(st.remaining.iter().flatten().copied()).any(|i| i >= n);
            if bad || st.score.correct > st.score.total {
                return Err(ServiceError::BadRequest(format!("snapshot session {:?} does not match the pool", st.id)));
            }
        }
        let count = snapshot.sessions.len();
        let mut sessions = lock(&self.sessions);
        for state in snapshot.sessions {
            sessions.insert(state.id.clone(), Arc::new(Mutex::new(Session { state, last_seen: Instant::now() })));
        }
        Ok(count)
    }

    /// Atomic JSON snapshot file.
    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec(&self.snapshot()).map_err(std::io::Error::other)?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, json)?;
        fs::rename(&tmp, path)
    }

    pub fn load_snapshot(&self, path: impl AsRef<Path>) -> std::io::Result<usize> {
        let snap: SessionSnapshot = serde_json::from_slice(&fs::read(path)?).map_err(std::io::Error::other)?;
        self.restore(snap).map_err(std::io::Error::other)
    }
}
