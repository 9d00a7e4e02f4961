//! Durable state for accounts, projects, sessions and annotation logs, and
//! the per-project CSV export that analysis tooling consumes.
//!
//! The store is an in-memory state machine. Every durable change is a
//! [`Mutation`]; when the store is backed by a journal file each mutation is
//! appended as one JSON line before it is applied, and reopening the file
//! replays the lines in order.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{
    frozen_span, replay_until, validate_client_trace, CursorDynamicsConfig, EventStreamValidator,
    InputEvent, InputEventKind, ToolKind, Trace, TraceSample, TraceValidation,
};
use crate::service::ProjectConfig;

/// Exact header line of the export format.
pub const CSV_HEADER: &str = "project_id,session_id,participant_id,video_id,tool,record_kind,video_time_ms,payload,server_received_iso8601";

const CSV_COLUMNS: usize = 9;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("journal i/o: {0}")]
    Io(#[from] io::Error),
    #[error("journal line {line} is corrupt: {reason}")]
    CorruptJournal { line: usize, reason: String },
    #[error("unknown project {0}")]
    UnknownProject(ProjectId),
}

#[derive(Debug, Error, PartialEq)]
pub enum ImportError {
    #[error("header does not match the export format")]
    HeaderMismatch,
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("trace {session_id}/{video_id} has no OPEN status record carrying its duration")]
    MissingDuration { session_id: String, video_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProjectId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u64);

impl fmt::Display for ProjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordKind {
    Event,
    Sample,
    Status,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Event => "EVENT",
            RecordKind::Sample => "SAMPLE",
            RecordKind::Status => "STATUS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VideoStatus {
    InProgress,
    Completed,
    Abandoned,
}

/// Payload of a STATUS record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StatusCode {
    /// The video became current; carries its duration.
    Open { duration_ms: u64 },
    Completed,
    Abandoned,
}

impl fmt::Display for StatusCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatusCode::Open { duration_ms } => write!(f, "OPEN:{duration_ms}"),
            StatusCode::Completed => f.write_str("COMPLETED"),
            StatusCode::Abandoned => f.write_str("ABANDONED"),
        }
    }
}

impl std::str::FromStr for StatusCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "COMPLETED" => Ok(StatusCode::Completed),
            "ABANDONED" => Ok(StatusCode::Abandoned),
            _ => {
                let duration = s
                    .strip_prefix("OPEN:")
                    .ok_or_else(|| format!("unknown status `{s}`"))?;
                let duration_ms = duration
                    .parse()
                    .map_err(|_| format!("bad duration in status `{s}`"))?;
                Ok(StatusCode::Open { duration_ms })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Event(InputEventKind),
    Sample(f64),
    Status(StatusCode),
}

impl Payload {
    pub fn kind(&self) -> RecordKind {
        match self {
            Payload::Event(_) => RecordKind::Event,
            Payload::Sample(_) => RecordKind::Sample,
            Payload::Status(_) => RecordKind::Status,
        }
    }

    fn render(&self) -> String {
        match self {
            Payload::Event(kind) => kind.as_str().to_string(),
            Payload::Sample(v) => format_value(*v),
            Payload::Status(code) => code.to_string(),
        }
    }
}

/// Rounds to nine significant digits. Stored sample values go through this
/// so that what is exported is exactly what is kept.
pub fn quantise_value(v: f64) -> f64 {
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    rounded + 0.0
}

/// Shortest decimal for `v` after rounding to nine significant digits.
pub fn format_value(v: f64) -> String {
    format!("{}", quantise_value(v))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// One row of an annotation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub project_id: String,
    pub session_id: String,
    pub participant_id: String,
    pub video_id: String,
    pub tool: ToolKind,
    pub video_time: u64,
    pub payload: Payload,
    pub server_received: DateTime<Utc>,
    /// Position within its (session, video) stream.
    pub sequence: u64,
}

impl LogRecord {
    pub fn kind(&self) -> RecordKind {
        self.payload.kind()
    }

    fn sort_key(&self) -> (&str, &str, u64, u64) {
        (&self.session_id, &self.video_id, self.video_time, self.sequence)
    }
}

/// Serialises records in export order: session, video, video time, then
/// sequence.
pub fn write_csv<'a>(records: impl IntoIterator<Item = &'a LogRecord>) -> Vec<u8> {
    let mut rows: Vec<&LogRecord> = records.into_iter().collect();
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, fields: &[&str]| {
        w.write_record(fields).expect("writing to memory");
    };
    write(&mut writer, &CSV_HEADER.split(',').collect::<Vec<_>>());
    for r in rows {
        write(
            &mut writer,
            &[
                &r.project_id,
                &r.session_id,
                &r.participant_id,
                &r.video_id,
                r.tool.as_str(),
                r.kind().as_str(),
                &r.video_time.to_string(),
                &r.payload.render(),
                &format_timestamp(&r.server_received),
            ],
        );
    }
    writer.into_inner().expect("in-memory writer")
}

/// A trace rebuilt from an export, with the metadata it was logged under.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedTrace {
    pub project_id: String,
    pub participant_id: String,
    pub trace: Trace,
    pub events: Vec<InputEvent>,
    pub status: Option<VideoStatus>,
    /// Samples were reconstructed by replaying events because the log held
    /// no SAMPLE rows.
    pub reconstructed: bool,
}

impl ImportedTrace {
    /// Base video id with any endless-rotation suffix removed.
    pub fn base_video_id(&self) -> &str {
        split_pass(&self.trace.video_id).0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportedLog {
    pub records: Vec<LogRecord>,
    pub traces: Vec<ImportedTrace>,
}

impl ImportedLog {
    /// Re-exports the records exactly as imported.
    pub fn to_csv(&self) -> Vec<u8> {
        write_csv(&self.records)
    }

    /// Replays every trace that carries both events and samples and compares
    /// the result with the logged samples.
    pub fn reconstruction_check(&self, config: &CursorDynamicsConfig) -> Vec<(String, TraceValidation)> {
        self.traces
            .iter()
            .filter(|t| !t.reconstructed && !t.events.is_empty())
            .map(|t| {
                let check = validate_client_trace(&t.trace, &t.events, config).unwrap_or(TraceValidation {
                    accepted: false,
                    max_abs_deviation: f64::INFINITY,
                });
                (t.trace.trace_id(), check)
            })
            .collect()
    }
}

/// Splits `video#pass` into its base id and rotation pass.
pub fn split_pass(video_id: &str) -> (&str, u64) {
    match video_id.rsplit_once('#') {
        Some((base, pass)) => match pass.parse() {
            Ok(p) => (base, p),
            Err(_) => (video_id, 0),
        },
        None => (video_id, 0),
    }
}

pub fn import_csv<R: Read>(input: R) -> Result<ImportedLog, ImportError> {
    import_csv_with(input, &CursorDynamicsConfig::default())
}

/// Parses an export. Traces without SAMPLE rows are rebuilt by replaying
/// their EVENT rows with `config`.
pub fn import_csv_with<R: Read>(
    mut input: R,
    config: &CursorDynamicsConfig,
) -> Result<ImportedLog, ImportError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| ImportError::MalformedRow {
        line: 0,
        reason: e.to_string(),
    })?;
    // On CRLF input the csv reader reports record starts one byte early, at
    // the previous line's LF, and its line counter lags accordingly.
    let line_at = |byte: u64| {
        let end = (byte as usize + 1).min(bytes.len());
        bytes[..end].iter().filter(|&&b| b == b'\n').count() as u64 + 1
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(Ok(h)) => h,
        _ => return Err(ImportError::HeaderMismatch),
    };
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(ImportError::HeaderMismatch);
    }

    let mut records = Vec::new();
    for (index, row) in rows.enumerate() {
        let row = row.map_err(|e| ImportError::MalformedRow {
            line: e.position().map_or(0, |p| line_at(p.byte())),
            reason: e.to_string(),
        })?;
        let parsed = parse_row(&row, 0, index as u64).map_err(|e| match e {
            ImportError::MalformedRow { reason, .. } => ImportError::MalformedRow {
                line: row.position().map_or(index as u64 + 2, |p| line_at(p.byte())),
                reason,
            },
            other => other,
        })?;
        records.push(parsed);
    }

    let traces = rebuild_traces(&records, config)?;
    Ok(ImportedLog { records, traces })
}

fn parse_row(row: &csv::StringRecord, line: u64, sequence: u64) -> Result<LogRecord, ImportError> {
    let bad = |reason: String| ImportError::MalformedRow { line, reason };
    if row.len() != CSV_COLUMNS {
        return Err(bad(format!("expected {CSV_COLUMNS} fields, found {}", row.len())));
    }
    let tool: ToolKind = row[4].parse().map_err(|e| bad(format!("{e}")))?;
    let video_time: u64 = row[6]
        .parse()
        .map_err(|_| bad(format!("video_time_ms `{}` is not a non-negative integer", &row[6])))?;
    let payload = match &row[5] {
        "EVENT" => Payload::Event(row[7].parse().map_err(bad)?),
        "SAMPLE" => {
            let v: f64 = row[7]
                .parse()
                .map_err(|_| bad(format!("sample value `{}` is not a number", &row[7])))?;
            if !tool.accepts_value(v) {
                return Err(bad(format!("sample value {v} is invalid for {tool}")));
            }
            Payload::Sample(v)
        }
        "STATUS" => Payload::Status(row[7].parse().map_err(bad)?),
        other => return Err(bad(format!("unknown record kind `{other}`"))),
    };
    let server_received = DateTime::parse_from_rfc3339(&row[8])
        .map_err(|e| bad(format!("timestamp `{}`: {e}", &row[8])))?
        .with_timezone(&Utc);
    Ok(LogRecord {
        project_id: row[0].to_string(),
        session_id: row[1].to_string(),
        participant_id: row[2].to_string(),
        video_id: row[3].to_string(),
        tool,
        video_time,
        payload,
        server_received,
        sequence,
    })
}

fn rebuild_traces(
    records: &[LogRecord],
    config: &CursorDynamicsConfig,
) -> Result<Vec<ImportedTrace>, ImportError> {
    let mut groups: BTreeMap<(&str, &str), Vec<(u64, &LogRecord)>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups
            .entry((&r.session_id, &r.video_id))
            .or_default()
            .push((i as u64 + 2, r));
    }

    let mut traces = Vec::with_capacity(groups.len());
    for ((session_id, video_id), rows) in groups {
        let first = rows[0].1;
        let mut duration = None;
        let mut status = None;
        let mut events = Vec::new();
        let mut samples: Vec<TraceSample> = Vec::new();
        let mut horizon = 0;
        for &(line, r) in &rows {
            let bad = |reason: String| ImportError::MalformedRow { line, reason };
            if r.tool != first.tool {
                return Err(bad(format!("tool changes within trace {session_id}/{video_id}")));
            }
            horizon = horizon.max(r.video_time);
            match r.payload {
                Payload::Event(kind) => events.push(InputEvent::new(r.video_time, kind)),
                Payload::Sample(value) => {
                    if samples.last().is_some_and(|s| s.video_time >= r.video_time) {
                        return Err(bad("sample times must increase strictly".into()));
                    }
                    samples.push(TraceSample::new(r.video_time, value));
                }
                Payload::Status(StatusCode::Open { duration_ms }) => duration = Some(duration_ms),
                Payload::Status(StatusCode::Completed) => status = Some(VideoStatus::Completed),
                Payload::Status(StatusCode::Abandoned) => status = Some(VideoStatus::Abandoned),
            }
        }
        let video_duration = duration.ok_or_else(|| ImportError::MissingDuration {
            session_id: session_id.to_string(),
            video_id: video_id.to_string(),
        })?;
        let horizon = horizon.min(video_duration);
        let viewed = horizon - frozen_span(&events, horizon).min(horizon);

        let reconstructed = samples.is_empty() && !events.is_empty();
        if reconstructed {
            let replayed = replay_until(&events, first.tool, config, video_duration, horizon).map_err(|e| {
                ImportError::MalformedRow {
                    line: rows[0].0,
                    reason: format!("events of {session_id}/{video_id} do not replay: {e}"),
                }
            })?;
            samples = replayed.samples;
        }

        traces.push(ImportedTrace {
            project_id: first.project_id.clone(),
            participant_id: first.participant_id.clone(),
            trace: Trace {
                session_id: session_id.to_string(),
                video_id: video_id.to_string(),
                tool: first.tool,
                samples,
                video_duration,
                viewed_duration: viewed,
            },
            events,
            status: status.or(Some(VideoStatus::InProgress)),
            reconstructed,
        });
    }
    Ok(traces)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Account {
    pub username: String,
    /// PHC-format salted digest.
    pub password_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectRecord {
    pub id: ProjectId,
    pub owner: String,
    pub config: ProjectConfig,
    pub link_key: String,
    pub created: DateTime<Utc>,
}

/// One position of a session's (possibly cyclic) video assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionVideo {
    /// Index into the project's video list.
    pub video: usize,
    /// `video_id` column value: the video id, suffixed `#pass` on repeat
    /// rotations of an endless project.
    pub key: String,
    pub duration_ms: u64,
    pub status: VideoStatus,
    #[serde(skip)]
    pub(crate) state: StreamState,
    pub records: Vec<LogRecord>,
}

/// Derived per-video ingestion state, rebuilt from the applied batches.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct StreamState {
    pub validator: EventStreamValidator,
    pub events: Vec<InputEvent>,
    pub last_sample: Option<u64>,
    pub max_time: u64,
    pub next_sequence: u64,
}

impl SessionVideo {
    pub fn max_video_time(&self) -> u64 {
        self.state.max_time
    }

    pub fn events(&self) -> &[InputEvent] {
        &self.state.events
    }

    /// Viewed video time: furthest record minus frozen spans.
    pub fn viewed_ms(&self) -> u64 {
        let horizon = self.state.max_time.min(self.duration_ms);
        horizon - frozen_span(&self.state.events, horizon).min(horizon)
    }

    pub(crate) fn validator(&self) -> &EventStreamValidator {
        &self.state.validator
    }

    pub(crate) fn last_sample_time(&self) -> Option<u64> {
        self.state.last_sample
    }

    pub(crate) fn next_sequence(&self) -> u64 {
        self.state.next_sequence
    }

    fn ingest(&mut self, records: &[LogRecord], keep: bool) {
        for r in records {
            self.state.max_time = self.state.max_time.max(r.video_time);
            self.state.next_sequence += 1;
            match r.payload {
                Payload::Event(kind) => {
                    let event = InputEvent::new(r.video_time, kind);
                    // validated by the service before the mutation was built
                    let _ = self.state.validator.push(&event);
                    self.state.events.push(event);
                }
                Payload::Sample(_) => self.state.last_sample = Some(r.video_time),
                Payload::Status(StatusCode::Completed) => self.status = VideoStatus::Completed,
                Payload::Status(StatusCode::Abandoned) => self.status = VideoStatus::Abandoned,
                Payload::Status(StatusCode::Open { .. }) => {}
            }
        }
        if keep {
            self.records.extend_from_slice(records);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: SessionId,
    pub project_id: ProjectId,
    pub participant_id: String,
    pub seed: u64,
    /// Number of sessions the project had before this one.
    pub ordinal: u64,
    /// Project video indices in presentation order, one rotation.
    pub assigned: Vec<usize>,
    pub cursor: usize,
    pub test_mode: bool,
    pub finished: bool,
    pub videos: Vec<SessionVideo>,
    pub started: DateTime<Utc>,
}

impl SessionRecord {
    pub fn current(&self) -> Option<&SessionVideo> {
        if self.finished {
            None
        } else {
            self.videos.get(self.cursor)
        }
    }

    /// Completed when at least one of its videos was completed.
    pub fn completed(&self) -> bool {
        self.videos.iter().any(|v| v.status == VideoStatus::Completed)
    }
}

/// A durable state change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    AccountCreated(Account),
    ProjectCreated(ProjectRecord),
    ProjectDeleted { project_id: ProjectId },
    SessionStarted(SessionRecord),
    EntriesAppended {
        session_id: SessionId,
        position: usize,
        records: Vec<LogRecord>,
    },
    VideoFinished {
        session_id: SessionId,
        position: usize,
        status_record: LogRecord,
        /// The next position to open, with its OPEN record.
        next: Option<SessionVideo>,
    },
}

#[derive(Debug, Default)]
pub struct StoreState {
    pub(crate) accounts: BTreeMap<String, Account>,
    pub(crate) projects: BTreeMap<ProjectId, ProjectRecord>,
    pub(crate) links: BTreeMap<String, ProjectId>,
    pub(crate) sessions: BTreeMap<SessionId, SessionRecord>,
    pub(crate) next_project: u64,
    pub(crate) next_session: u64,
}

impl StoreState {
    pub fn account(&self, username: &str) -> Option<&Account> {
        self.accounts.get(username)
    }

    pub fn project(&self, id: ProjectId) -> Option<&ProjectRecord> {
        self.projects.get(&id)
    }

    pub fn project_by_link(&self, link_key: &str) -> Option<&ProjectRecord> {
        self.links.get(link_key).and_then(|id| self.projects.get(id))
    }

    pub fn projects_of<'a>(&'a self, owner: &'a str) -> impl Iterator<Item = &'a ProjectRecord> + 'a {
        self.projects.values().filter(move |p| p.owner == owner)
    }

    pub fn session(&self, id: SessionId) -> Option<&SessionRecord> {
        self.sessions.get(&id)
    }

    pub fn sessions_of(&self, project: ProjectId) -> impl Iterator<Item = &SessionRecord> + '_ {
        self.sessions.values().filter(move |s| s.project_id == project)
    }

    pub fn next_project_id(&self) -> ProjectId {
        ProjectId(self.next_project + 1)
    }

    pub fn next_session_id(&self) -> SessionId {
        SessionId(self.next_session + 1)
    }

    /// Every stored log record of a project.
    pub fn project_records(&self, project: ProjectId) -> impl Iterator<Item = &LogRecord> + '_ {
        self.sessions_of(project)
            .filter(|s| !s.test_mode)
            .flat_map(|s| s.videos.iter().flat_map(|v| v.records.iter()))
    }

    fn apply(&mut self, m: Mutation) -> Result<(), String> {
        match m {
            Mutation::AccountCreated(account) => {
                self.accounts.insert(account.username.clone(), account);
            }
            Mutation::ProjectCreated(project) => {
                self.next_project = self.next_project.max(project.id.0);
                self.links.insert(project.link_key.clone(), project.id);
                self.projects.insert(project.id, project);
            }
            Mutation::ProjectDeleted { project_id } => {
                let project = self
                    .projects
                    .remove(&project_id)
                    .ok_or_else(|| format!("delete of unknown project {project_id}"))?;
                self.links.remove(&project.link_key);
                self.sessions.retain(|_, s| s.project_id != project_id);
            }
            Mutation::SessionStarted(mut session) => {
                self.next_session = self.next_session.max(session.id.0);
                let keep = !session.test_mode;
                for video in &mut session.videos {
                    let records = std::mem::take(&mut video.records);
                    video.state = StreamState::default();
                    video.ingest(&records, keep);
                }
                self.sessions.insert(session.id, session);
            }
            Mutation::EntriesAppended {
                session_id,
                position,
                records,
            } => {
                let (video, keep) = self.video_mut(session_id, position)?;
                video.ingest(&records, keep);
            }
            Mutation::VideoFinished {
                session_id,
                position,
                status_record,
                next,
            } => {
                let (video, keep) = self.video_mut(session_id, position)?;
                video.ingest(std::slice::from_ref(&status_record), keep);
                let session = self.sessions.get_mut(&session_id).expect("checked above");
                match next {
                    Some(mut next) => {
                        let records = std::mem::take(&mut next.records);
                        next.state = StreamState::default();
                        next.ingest(&records, keep);
                        session.videos.push(next);
                        session.cursor = position + 1;
                    }
                    None => {
                        session.cursor = position + 1;
                        session.finished = true;
                    }
                }
            }
        }
        Ok(())
    }

    fn video_mut(&mut self, session_id: SessionId, position: usize) -> Result<(&mut SessionVideo, bool), String> {
        let session = self
            .sessions
            .get_mut(&session_id)
            .ok_or_else(|| format!("unknown session {session_id}"))?;
        let keep = !session.test_mode;
        let video = session
            .videos
            .get_mut(position)
            .ok_or_else(|| format!("session {session_id} has no video at {position}"))?;
        Ok((video, keep))
    }
}

fn durable(m: &Mutation, state: &StoreState) -> bool {
    match m {
        Mutation::SessionStarted(s) => !s.test_mode,
        Mutation::EntriesAppended { session_id, .. } | Mutation::VideoFinished { session_id, .. } => {
            state.session(*session_id).is_some_and(|s| !s.test_mode)
        }
        _ => true,
    }
}

/// Thread-safe store; see the module docs.
#[derive(Debug)]
pub struct Store {
    state: RwLock<StoreState>,
    journal: Mutex<Option<BufWriter<File>>>,
}

impl Default for Store {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Store {
    pub fn in_memory() -> Self {
        Store {
            state: RwLock::new(StoreState::default()),
            journal: Mutex::new(None),
        }
    }

    /// Opens (or creates) a journal file and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let mut state = StoreState::default();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let corrupt = |reason: String| StoreError::CorruptJournal { line: i + 1, reason };
                let m: Mutation = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                state.apply(m).map_err(corrupt)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Store {
            state: RwLock::new(state),
            journal: Mutex::new(Some(BufWriter::new(file))),
        })
    }

    pub fn read<R>(&self, f: impl FnOnce(&StoreState) -> R) -> R {
        f(&self.state.read())
    }

    /// Runs `decide` under the write lock and commits the mutation it
    /// returns, if any. Nothing is written when `decide` fails.
    pub fn transact<R, E>(
        &self,
        decide: impl FnOnce(&StoreState) -> Result<(Option<Mutation>, R), E>,
    ) -> Result<R, E>
    where
        E: From<StoreError>,
    {
        let mut state = self.state.write();
        let (mutation, out) = decide(&state)?;
        let Some(mutation) = mutation else {
            return Ok(out);
        };
        if durable(&mutation, &state) {
            if let Some(journal) = self.journal.lock().as_mut() {
                let line = serde_json::to_string(&mutation).map_err(io::Error::from).map_err(StoreError::from)?;
                writeln!(journal, "{line}").map_err(StoreError::from)?;
                journal.flush().map_err(StoreError::from)?;
            }
        }
        state
            .apply(mutation)
            .map_err(|reason| StoreError::CorruptJournal { line: 0, reason })?;
        Ok(out)
    }

    /// CSV export of every stored record of a project.
    pub fn export_csv(&self, project: ProjectId) -> Result<Vec<u8>, StoreError> {
        let state = self.state.read();
        if state.project(project).is_none() {
            return Err(StoreError::UnknownProject(project));
        }
        Ok(write_csv(state.project_records(project)))
    }
}
