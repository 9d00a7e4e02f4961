//! Researcher accounts, project lifecycle, participation links, video
//! assignment and log ingestion.
//!
//! [`ProjectService`] is transport-agnostic; [`crate::http`] exposes it as a
//! JSON API.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::{Algorithm, Argon2, Params, Version};
use chrono::{DateTime, TimeZone, Utc};
use parking_lot::{Mutex, RwLock};
use rand::distr::{Alphanumeric, SampleString};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::annotation::{completion_for, AnnotationError, InputEvent, InputEventKind, ToolKind};
use crate::store::{
    quantise_value, Account, LogRecord, Mutation, Payload, ProjectId, ProjectRecord, SessionId,
    SessionRecord, SessionVideo, StatusCode, Store, StoreError, StoreState, VideoStatus,
};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("authentication required")]
    Unauthenticated,
    #[error("not permitted for this account")]
    Unauthorized,
    #[error("{field}: {message}")]
    ValidationError { field: String, message: String },
    #[error("unknown project {0}")]
    UnknownProject(ProjectId),
    #[error("unknown participation link `{0}`")]
    UnknownLink(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("video index {got} is not current (current: {current:?})")]
    StaleVideoIndex { current: Option<usize>, got: usize },
    #[error("{0}")]
    MalformedEventStream(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ServiceError {
    /// Machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Unauthenticated => "Unauthenticated",
            ServiceError::Unauthorized => "Unauthorized",
            ServiceError::ValidationError { .. } => "ValidationError",
            ServiceError::UnknownProject(_) => "UnknownProject",
            ServiceError::UnknownLink(_) => "UnknownLink",
            ServiceError::UnknownSession(_) => "UnknownSession",
            ServiceError::StaleVideoIndex { .. } => "StaleVideoIndex",
            ServiceError::MalformedEventStream(_) => "MalformedEventStream",
            ServiceError::Store(_) => "StorageError",
        }
    }

    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ServiceError::ValidationError {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<AnnotationError> for ServiceError {
    fn from(e: AnnotationError) -> Self {
        ServiceError::MalformedEventStream(e.to_string())
    }
}

/// Source of `server_received` timestamps.
pub trait Clock: Send + Sync + fmt::Debug {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        // Exports carry millisecond precision.
        let ms = Utc::now().timestamp_millis();
        Utc.timestamp_millis_opt(ms).single().unwrap_or_default()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock(AtomicI64::new(start.timestamp_millis()))
    }

    pub fn advance_ms(&self, ms: i64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        Utc.timestamp_millis_opt(self.0.load(Ordering::SeqCst))
            .single()
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VideoKind {
    Upload,
    Youtube,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoSource {
    /// Short identifier, used as the `video_id` of log records.
    pub id: String,
    pub kind: VideoKind,
    /// Path below the media root for uploads, URL for YouTube.
    pub locator: String,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VideoOrdering {
    Sequence,
    Random,
    RandomLimited { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub title: String,
    /// Label of the annotated dimension, shown on the y axis.
    pub target_label: String,
    pub tool: ToolKind,
    pub videos: Vec<VideoSource>,
    pub ordering: VideoOrdering,
    #[serde(default)]
    pub endless: bool,
    #[serde(default)]
    pub sound: bool,
    #[serde(default)]
    pub pre_message: String,
    #[serde(default)]
    pub post_message: String,
    #[serde(default)]
    pub survey_link: Option<String>,
    /// Requested link key; one is minted when absent.
    #[serde(default)]
    pub link_key: Option<String>,
}

/// Argon2 cost parameters for researcher passwords.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PasswordCost {
    pub memory_kib: u32,
    pub iterations: u32,
}

impl Default for PasswordCost {
    fn default() -> Self {
        PasswordCost {
            memory_kib: 19 * 1024,
            iterations: 2,
        }
    }
}

impl PasswordCost {
    /// Cheap parameters for tests and demos.
    pub fn insecure_fast() -> Self {
        PasswordCost {
            memory_kib: 64,
            iterations: 1,
        }
    }

    fn hasher(&self) -> Argon2<'static> {
        let params = Params::new(self.memory_kib, self.iterations, 1, None).expect("valid argon2 params");
        Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Prefix of share links, e.g. `https://annotate.example.org`.
    pub base_url: String,
    /// Directory holding uploaded videos.
    pub media_root: Option<PathBuf>,
    pub password_cost: PasswordCost,
    /// Seeds the generator for session seeds and participant tokens; entropy
    /// when absent.
    pub rng_seed: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            base_url: "http://localhost:8080".into(),
            media_root: None,
            password_cost: PasswordCost::default(),
            rng_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedProject {
    pub project_id: ProjectId,
    pub link_key: String,
    pub share_link: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub project_id: ProjectId,
    pub title: String,
    pub tool: ToolKind,
    pub share_link: String,
    pub sessions_started: usize,
    pub sessions_completed: usize,
    pub videos_completed: usize,
    pub export_link: String,
}

/// What an anonymous visitor of a share link sees before starting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectLanding {
    pub title: String,
    pub target_label: String,
    pub tool: ToolKind,
    pub sound: bool,
    pub pre_message: String,
    pub video_count: usize,
    pub endless: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAssignment {
    pub video_index: usize,
    /// `video_id` this position is logged under.
    pub video_key: String,
    pub video: VideoSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: SessionId,
    pub participant_id: String,
    pub seed: u64,
    pub test_mode: bool,
    pub tool: ToolKind,
    pub title: String,
    pub target_label: String,
    pub sound: bool,
    pub pre_message: String,
    /// Video ids of one rotation, in presentation order.
    pub assignment: Vec<String>,
    pub first: VideoAssignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Entry {
    Event { video_time: u64, kind: InputEventKind },
    Sample { video_time: u64, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub accepted: usize,
    pub persisted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinishResponse {
    pub status: VideoStatus,
    pub fraction_viewed: f64,
    pub next: Option<VideoAssignment>,
    pub post_message: Option<String>,
    pub survey_link: Option<String>,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Presentation order for one session as indices into the project's video
/// list. A pure function of its arguments.
pub fn assign_videos(ordering: VideoOrdering, video_count: usize, seed: u64, ordinal: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..video_count).collect();
    if ordering == VideoOrdering::Sequence {
        return order;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ordinal.wrapping_mul(GOLDEN_GAMMA));
    order.shuffle(&mut rng);
    if let VideoOrdering::RandomLimited { n } = ordering {
        order.truncate(n);
    }
    order
}

fn video_key(config: &ProjectConfig, assigned: &[usize], position: usize) -> (usize, String) {
    let video = assigned[position % assigned.len()];
    let pass = position / assigned.len();
    let id = &config.videos[video].id;
    let key = if pass == 0 { id.clone() } else { format!("{id}#{pass}") };
    (video, key)
}

fn valid_token(s: &str, max: usize) -> bool {
    !s.is_empty()
        && s.len() <= max
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn is_youtube(url: &Url) -> bool {
    let host = url.host_str().unwrap_or_default();
    match host {
        "youtu.be" => url.path().len() > 1,
        "youtube.com" | "www.youtube.com" | "m.youtube.com" => {
            url.query_pairs().any(|(k, v)| k == "v" && !v.is_empty())
                || url.path().starts_with("/embed/") && url.path().len() > "/embed/".len()
        }
        _ => false,
    }
}

fn parse_http_url(s: &str) -> Option<Url> {
    Url::parse(s)
        .ok()
        .filter(|u| matches!(u.scheme(), "http" | "https") && u.host_str().is_some())
}

fn validate_config(config: &ProjectConfig, media_root: Option<&Path>) -> Result<(), ServiceError> {
    if config.title.trim().is_empty() {
        return Err(ServiceError::invalid("title", "must not be empty"));
    }
    if config.target_label.trim().is_empty() {
        return Err(ServiceError::invalid("target_label", "must not be empty"));
    }
    if config.videos.is_empty() {
        return Err(ServiceError::invalid("videos", "at least one video is required"));
    }
    let mut ids = BTreeSet::new();
    for (i, video) in config.videos.iter().enumerate() {
        let field = |name: &str| format!("videos[{i}].{name}");
        if !valid_token(&video.id, 64) {
            return Err(ServiceError::invalid(
                field("id"),
                "use 1-64 characters from A-Z, a-z, 0-9, '-', '_', '.'",
            ));
        }
        if !ids.insert(video.id.as_str()) {
            return Err(ServiceError::invalid(field("id"), "duplicate video id"));
        }
        if video.duration_ms == 0 {
            return Err(ServiceError::invalid(field("duration_ms"), "must be positive"));
        }
        match video.kind {
            VideoKind::Youtube => {
                if !parse_http_url(&video.locator).is_some_and(|u| is_youtube(&u)) {
                    return Err(ServiceError::invalid(field("locator"), "not a YouTube video URL"));
                }
            }
            VideoKind::Upload => {
                let relative = Path::new(&video.locator);
                let safe = !video.locator.is_empty()
                    && relative.components().all(|c| matches!(c, Component::Normal(_)));
                let exists = media_root.is_some_and(|root| root.join(relative).is_file());
                if !safe || !exists {
                    return Err(ServiceError::invalid(field("locator"), "no such uploaded file"));
                }
            }
        }
    }
    if let VideoOrdering::RandomLimited { n } = config.ordering {
        if n == 0 || n > config.videos.len() {
            return Err(ServiceError::invalid(
                "ordering",
                format!("limit {n} must be between 1 and {}", config.videos.len()),
            ));
        }
    }
    if let Some(link) = &config.survey_link {
        if parse_http_url(link).is_none() {
            return Err(ServiceError::invalid("survey_link", "not an http(s) URL"));
        }
    }
    if let Some(key) = &config.link_key {
        if key.len() < 4 || !valid_token(key, 64) || key.contains('.') {
            return Err(ServiceError::invalid("link_key", "use 4-64 URL-safe characters"));
        }
    }
    Ok(())
}

/// The annotation service; thread-safe, share it behind an `Arc`.
#[derive(Debug)]
pub struct ProjectService {
    store: Store,
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    tokens: RwLock<HashMap<String, String>>,
    rng: Mutex<ChaCha20Rng>,
}

impl ProjectService {
    pub fn new(store: Store, config: ServiceConfig, clock: Arc<dyn Clock>) -> Self {
        let rng = match config.rng_seed {
            Some(seed) => ChaCha20Rng::seed_from_u64(seed),
            None => ChaCha20Rng::from_os_rng(),
        };
        ProjectService {
            store,
            config,
            clock,
            tokens: RwLock::new(HashMap::new()),
            rng: Mutex::new(rng),
        }
    }

    /// In-memory service with a system clock.
    pub fn in_memory(config: ServiceConfig) -> Self {
        Self::new(Store::in_memory(), config, Arc::new(SystemClock))
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn share_link(&self, link_key: &str) -> String {
        format!("{}/a/{}", self.config.base_url.trim_end_matches('/'), link_key)
    }

    fn token(&self, len: usize) -> String {
        Alphanumeric.sample_string(&mut *self.rng.lock(), len)
    }

    pub fn register(&self, username: &str, password: &str) -> Result<(), ServiceError> {
        if !valid_token(username, 64) {
            return Err(ServiceError::invalid("username", "use 1-64 URL-safe characters"));
        }
        if password.chars().count() < 8 {
            return Err(ServiceError::invalid("password", "must be at least 8 characters"));
        }
        let salt_bytes: [u8; 16] = self.rng.lock().random();
        let salt = SaltString::encode_b64(&salt_bytes).map_err(|e| ServiceError::invalid("password", e.to_string()))?;
        let password_hash = self
            .config
            .password_cost
            .hasher()
            .hash_password(password.as_bytes(), &salt)
            .map_err(|e| ServiceError::invalid("password", e.to_string()))?
            .to_string();
        self.store.transact(|state| {
            if state.account(username).is_some() {
                return Err(ServiceError::invalid("username", "already taken"));
            }
            let account = Account {
                username: username.to_string(),
                password_hash,
            };
            Ok((Some(Mutation::AccountCreated(account)), ()))
        })
    }

    /// Checks the password and returns a bearer token.
    pub fn login(&self, username: &str, password: &str) -> Result<String, ServiceError> {
        let digest = self
            .store
            .read(|s| s.account(username).map(|a| a.password_hash.clone()))
            .ok_or(ServiceError::Unauthenticated)?;
        let parsed = PasswordHash::new(&digest).map_err(|_| ServiceError::Unauthenticated)?;
        self.config
            .password_cost
            .hasher()
            .verify_password(password.as_bytes(), &parsed)
            .map_err(|_| ServiceError::Unauthenticated)?;
        let token = self.token(32);
        self.tokens.write().insert(token.clone(), username.to_string());
        Ok(token)
    }

    /// Resolves a bearer token to its account.
    pub fn authenticate(&self, token: &str) -> Result<String, ServiceError> {
        self.tokens
            .read()
            .get(token)
            .cloned()
            .ok_or(ServiceError::Unauthenticated)
    }

    pub fn create_project(&self, owner: &str, mut config: ProjectConfig) -> Result<CreatedProject, ServiceError> {
        validate_config(&config, self.config.media_root.as_deref())?;
        let minted = self.token(16);
        let created = self.clock.now();
        let out = self.store.transact(|state| {
            if state.account(owner).is_none() {
                return Err(ServiceError::Unauthenticated);
            }
            let link_key = match config.link_key.clone() {
                Some(key) if state.project_by_link(&key).is_some() => {
                    return Err(ServiceError::invalid("link_key", "already in use"));
                }
                Some(key) => key,
                None if state.project_by_link(&minted).is_some() => {
                    return Err(ServiceError::invalid("link_key", "collision, retry"));
                }
                None => minted,
            };
            config.link_key = Some(link_key.clone());
            let id = state.next_project_id();
            let record = ProjectRecord {
                id,
                owner: owner.to_string(),
                config,
                link_key: link_key.clone(),
                created,
            };
            Ok((Some(Mutation::ProjectCreated(record)), (id, link_key)))
        })?;
        Ok(CreatedProject {
            project_id: out.0,
            share_link: self.share_link(&out.1),
            link_key: out.1,
        })
    }

    pub fn project_summary(&self, owner: &str) -> Vec<ProjectSummary> {
        self.store.read(|state| {
            state
                .projects_of(owner)
                .map(|p| {
                    let sessions: Vec<&SessionRecord> =
                        state.sessions_of(p.id).filter(|s| !s.test_mode).collect();
                    ProjectSummary {
                        project_id: p.id,
                        title: p.config.title.clone(),
                        tool: p.config.tool,
                        share_link: self.share_link(&p.link_key),
                        sessions_started: sessions.len(),
                        sessions_completed: sessions.iter().filter(|s| s.completed()).count(),
                        videos_completed: sessions
                            .iter()
                            .flat_map(|s| &s.videos)
                            .filter(|v| v.status == VideoStatus::Completed)
                            .count(),
                        export_link: format!("/api/projects/{}/export.csv", p.id),
                    }
                })
                .collect()
        })
    }

    fn owned<'a>(state: &'a StoreState, owner: &str, id: ProjectId) -> Result<&'a ProjectRecord, ServiceError> {
        let project = state.project(id).ok_or(ServiceError::UnknownProject(id))?;
        if project.owner != owner {
            return Err(ServiceError::Unauthorized);
        }
        Ok(project)
    }

    pub fn project_config(&self, owner: &str, id: ProjectId) -> Result<ProjectConfig, ServiceError> {
        self.store
            .read(|state| Self::owned(state, owner, id).map(|p| p.config.clone()))
    }

    pub fn delete_project(&self, owner: &str, id: ProjectId) -> Result<(), ServiceError> {
        self.store.transact(|state| {
            Self::owned(state, owner, id)?;
            Ok((Some(Mutation::ProjectDeleted { project_id: id }), ()))
        })
    }

    pub fn export_csv(&self, owner: &str, id: ProjectId) -> Result<Vec<u8>, ServiceError> {
        self.store.read(|state| Self::owned(state, owner, id).map(|_| ()))?;
        Ok(self.store.export_csv(id)?)
    }

    pub fn landing(&self, link_key: &str) -> Result<ProjectLanding, ServiceError> {
        self.store.read(|state| {
            let p = state
                .project_by_link(link_key)
                .ok_or_else(|| ServiceError::UnknownLink(link_key.to_string()))?;
            Ok(ProjectLanding {
                title: p.config.title.clone(),
                target_label: p.config.target_label.clone(),
                tool: p.config.tool,
                sound: p.config.sound,
                pre_message: p.config.pre_message.clone(),
                video_count: p.config.videos.len(),
                endless: p.config.endless,
            })
        })
    }

    fn open_video(
        &self,
        project: &ProjectRecord,
        session_id: SessionId,
        participant_id: &str,
        assigned: &[usize],
        position: usize,
        now: DateTime<Utc>,
    ) -> SessionVideo {
        let (video, key) = video_key(&project.config, assigned, position);
        let duration_ms = project.config.videos[video].duration_ms;
        let open = LogRecord {
            project_id: project.id.to_string(),
            session_id: session_id.to_string(),
            participant_id: participant_id.to_string(),
            video_id: key.clone(),
            tool: project.config.tool,
            video_time: 0,
            payload: Payload::Status(StatusCode::Open { duration_ms }),
            server_received: now,
            sequence: 0,
        };
        SessionVideo {
            video,
            key,
            duration_ms,
            status: VideoStatus::InProgress,
            state: Default::default(),
            records: vec![open],
        }
    }

    fn assignment(project: &ProjectRecord, video: &SessionVideo, position: usize) -> VideoAssignment {
        VideoAssignment {
            video_index: position,
            video_key: video.key.clone(),
            video: project.config.videos[video.video].clone(),
        }
    }

    /// Opens a session for a participant arriving through a share link.
    pub fn start_session(
        &self,
        link_key: &str,
        participant_id: Option<&str>,
        test_mode: bool,
    ) -> Result<SessionDescriptor, ServiceError> {
        let participant_id = match participant_id {
            Some(p) if !valid_token(p, 128) => {
                return Err(ServiceError::invalid("participant_id", "use 1-128 URL-safe characters"));
            }
            Some(p) => p.to_string(),
            None => format!("anon-{}", self.token(16)),
        };
        let seed: u64 = self.rng.lock().random();
        let now = self.clock.now();
        self.store.transact(|state| {
            let project = state
                .project_by_link(link_key)
                .ok_or_else(|| ServiceError::UnknownLink(link_key.to_string()))?;
            let ordinal = state
                .sessions_of(project.id)
                .filter(|s| s.test_mode == test_mode)
                .count() as u64;
            let assigned = assign_videos(project.config.ordering, project.config.videos.len(), seed, ordinal);
            let id = state.next_session_id();
            let first = self.open_video(project, id, &participant_id, &assigned, 0, now);
            let descriptor = SessionDescriptor {
                session_id: id,
                participant_id: participant_id.clone(),
                seed,
                test_mode,
                tool: project.config.tool,
                title: project.config.title.clone(),
                target_label: project.config.target_label.clone(),
                sound: project.config.sound,
                pre_message: project.config.pre_message.clone(),
                assignment: assigned
                    .iter()
                    .map(|&v| project.config.videos[v].id.clone())
                    .collect(),
                first: Self::assignment(project, &first, 0),
            };
            let session = SessionRecord {
                id,
                project_id: project.id,
                participant_id: participant_id.clone(),
                seed,
                ordinal,
                assigned,
                cursor: 0,
                test_mode,
                finished: false,
                videos: vec![first],
                started: now,
            };
            Ok((Some(Mutation::SessionStarted(session)), descriptor))
        })
    }

    fn current(
        state: &StoreState,
        session_id: SessionId,
        video_index: usize,
    ) -> Result<(&SessionRecord, &SessionVideo, &ProjectRecord), ServiceError> {
        let session = state
            .session(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))?;
        let video = session
            .current()
            .filter(|_| session.cursor == video_index)
            .ok_or(ServiceError::StaleVideoIndex {
                current: (!session.finished).then_some(session.cursor),
                got: video_index,
            })?;
        let project = state
            .project(session.project_id)
            .ok_or(ServiceError::UnknownProject(session.project_id))?;
        Ok((session, video, project))
    }

    /// Appends a batch of events and samples to the current video's log.
    /// The batch is all-or-nothing.
    pub fn append_entries(
        &self,
        session_id: SessionId,
        video_index: usize,
        batch: &[Entry],
    ) -> Result<Ack, ServiceError> {
        let now = self.clock.now();
        self.store.transact(|state| {
            let (session, video, project) = Self::current(state, session_id, video_index)?;
            let tool = project.config.tool;
            let mut validator = video.validator().clone();
            let mut last_sample = video.last_sample_time();
            let mut records = Vec::with_capacity(batch.len());
            for (i, entry) in batch.iter().enumerate() {
                let malformed = |reason: String| ServiceError::MalformedEventStream(format!("entry {i}: {reason}"));
                let (video_time, payload) = match *entry {
                    Entry::Event { video_time, kind } => {
                        validator
                            .push(&InputEvent::new(video_time, kind))
                            .map_err(|e| malformed(e.to_string()))?;
                        (video_time, Payload::Event(kind))
                    }
                    Entry::Sample { video_time, value } => {
                        if !tool.accepts_value(value) {
                            return Err(malformed(format!("value {value} is invalid for {tool}")));
                        }
                        if last_sample.is_some_and(|t| t >= video_time) {
                            return Err(malformed(format!(
                                "sample at {video_time} ms does not follow the previous sample"
                            )));
                        }
                        last_sample = Some(video_time);
                        (video_time, Payload::Sample(quantise_value(value)))
                    }
                };
                if video_time > video.duration_ms {
                    return Err(malformed(format!(
                        "video_time {video_time} exceeds the video duration {}",
                        video.duration_ms
                    )));
                }
                records.push(LogRecord {
                    project_id: project.id.to_string(),
                    session_id: session_id.to_string(),
                    participant_id: session.participant_id.clone(),
                    video_id: video.key.clone(),
                    tool,
                    video_time,
                    payload,
                    server_received: now,
                    sequence: video.next_sequence() + i as u64,
                });
            }
            let ack = Ack {
                accepted: records.len(),
                persisted: !session.test_mode,
            };
            let mutation = (!records.is_empty()).then_some(Mutation::EntriesAppended {
                session_id,
                position: video_index,
                records,
            });
            Ok((mutation, ack))
        })
    }

    /// Closes the current video, records its completion status and moves
    /// the session on.
    pub fn finish_video(&self, session_id: SessionId, video_index: usize) -> Result<FinishResponse, ServiceError> {
        let now = self.clock.now();
        self.store.transact(|state| {
            let (session, video, project) = Self::current(state, session_id, video_index)?;
            let completion = completion_for(video.viewed_ms(), video.duration_ms)?;
            let (status, code) = if completion.completed {
                (VideoStatus::Completed, StatusCode::Completed)
            } else {
                (VideoStatus::Abandoned, StatusCode::Abandoned)
            };
            let status_record = LogRecord {
                project_id: project.id.to_string(),
                session_id: session_id.to_string(),
                participant_id: session.participant_id.clone(),
                video_id: video.key.clone(),
                tool: project.config.tool,
                video_time: video.max_video_time(),
                payload: Payload::Status(code),
                server_received: now,
                sequence: video.next_sequence(),
            };
            let position = video_index + 1;
            let next = (project.config.endless || position < session.assigned.len()).then(|| {
                self.open_video(project, session_id, &session.participant_id, &session.assigned, position, now)
            });
            let response = FinishResponse {
                status,
                fraction_viewed: completion.fraction_viewed,
                next: next.as_ref().map(|v| Self::assignment(project, v, position)),
                post_message: next.is_none().then(|| project.config.post_message.clone()),
                survey_link: if next.is_none() {
                    project.config.survey_link.clone()
                } else {
                    None
                },
            };
            let mutation = Mutation::VideoFinished {
                session_id,
                position: video_index,
                status_record,
                next,
            };
            Ok((Some(mutation), response))
        })
    }

    /// Snapshot of a session, for inspection.
    pub fn session(&self, session_id: SessionId) -> Option<SessionRecord> {
        self.store.read(|s| s.session(session_id).cloned())
    }
}
