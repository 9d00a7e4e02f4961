//! Traces, input events and the reference dynamics of the three annotation
//! tools.
//!
//! Everything here is a pure function of its inputs. The server replays the
//! raw keyboard stream of a session with [`replay`] and gets back exactly the
//! trace a conforming client would have drawn, which is what
//! [`validate_client_trace`] relies on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gap between two heartbeat samples while the video is playing.
pub const HEARTBEAT_INTERVAL_MS: u64 = 1000;

/// Share of a video that must be seen for it to count as completed.
pub const COMPLETION_THRESHOLD: f64 = 0.25;

/// Maximum value deviation tolerated between a client trace and its replay.
pub const REPLAY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotationError {
    #[error("malformed event stream at event {index}: {reason}")]
    MalformedEventStream { index: usize, reason: String },
    #[error("unknown annotation tool `{0}`")]
    UnknownTool(String),
    #[error("video duration is zero")]
    ZeroDurationVideo,
    #[error("invalid cursor dynamics: {0}")]
    InvalidConfig(String),
}

impl AnnotationError {
    fn malformed(index: usize, reason: impl Into<String>) -> Self {
        AnnotationError::MalformedEventStream {
            index,
            reason: reason.into(),
        }
    }
}

/// One of the three one-dimensional labelling protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ToolKind {
    /// Unbounded continuous trace with full visible history.
    #[serde(rename = "RANKTRACE")]
    RankTrace,
    /// Bounded continuous trace on `[0, 1]` with a fading mark.
    #[serde(rename = "GTRACE")]
    GTrace,
    /// Discrete `+1` / `-1` change reports.
    #[serde(rename = "BTRACE")]
    BTrace,
}

impl ToolKind {
    pub const ALL: [ToolKind; 3] = [ToolKind::RankTrace, ToolKind::GTrace, ToolKind::BTrace];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolKind::RankTrace => "RANKTRACE",
            ToolKind::GTrace => "GTRACE",
            ToolKind::BTrace => "BTRACE",
        }
    }

    /// Human-facing name, as shown in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ToolKind::RankTrace => "RankTrace",
            ToolKind::GTrace => "GTrace",
            ToolKind::BTrace => "BTrace",
        }
    }

    pub fn is_continuous(self) -> bool {
        !matches!(self, ToolKind::BTrace)
    }

    /// Cursor position before any input.
    pub fn start_value(self) -> Option<f64> {
        match self {
            ToolKind::RankTrace => Some(0.0),
            ToolKind::GTrace => Some(0.5),
            ToolKind::BTrace => None,
        }
    }

    /// Whether `value` is admissible as a sample of this tool.
    pub fn accepts_value(self, value: f64) -> bool {
        match self {
            ToolKind::RankTrace => value.is_finite(),
            ToolKind::GTrace => (0.0..=1.0).contains(&value),
            ToolKind::BTrace => value == 1.0 || value == -1.0,
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolKind {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RANKTRACE" => Ok(ToolKind::RankTrace),
            "GTRACE" => Ok(ToolKind::GTrace),
            "BTRACE" => Ok(ToolKind::BTrace),
            _ => Err(AnnotationError::UnknownTool(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InputEventKind {
    KeyDownUp,
    KeyDownDown,
    KeyUpUp,
    KeyUpDown,
    Pause,
    Resume,
    Blur,
    Focus,
}

impl InputEventKind {
    pub const ALL: [InputEventKind; 8] = [
        InputEventKind::KeyDownUp,
        InputEventKind::KeyDownDown,
        InputEventKind::KeyUpUp,
        InputEventKind::KeyUpDown,
        InputEventKind::Pause,
        InputEventKind::Resume,
        InputEventKind::Blur,
        InputEventKind::Focus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InputEventKind::KeyDownUp => "KEY_DOWN_UP",
            InputEventKind::KeyDownDown => "KEY_DOWN_DOWN",
            InputEventKind::KeyUpUp => "KEY_UP_UP",
            InputEventKind::KeyUpDown => "KEY_UP_DOWN",
            InputEventKind::Pause => "PAUSE",
            InputEventKind::Resume => "RESUME",
            InputEventKind::Blur => "BLUR",
            InputEventKind::Focus => "FOCUS",
        }
    }
}

impl fmt::Display for InputEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputEventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InputEventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

/// A keyboard or visibility event, stamped with video time in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputEvent {
    pub video_time: u64,
    pub kind: InputEventKind,
}

impl InputEvent {
    pub fn new(video_time: u64, kind: InputEventKind) -> Self {
        InputEvent { video_time, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub video_time: u64,
    pub value: f64,
}

impl TraceSample {
    pub fn new(video_time: u64, value: f64) -> Self {
        TraceSample { video_time, value }
    }
}

/// The annotation of one video by one participant with one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub session_id: String,
    pub video_id: String,
    pub tool: ToolKind,
    pub samples: Vec<TraceSample>,
    pub video_duration: u64,
    pub viewed_duration: u64,
}

impl Trace {
    /// `session_id/video_id`, used to name the trace in reports.
    pub fn trace_id(&self) -> String {
        format!("{}/{}", self.session_id, self.video_id)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.value)
    }

    /// Zero-order-hold value at `t`; before the first sample the first value
    /// is held backwards.
    pub fn value_at(&self, t: u64) -> Option<f64> {
        let first = self.samples.first()?;
        let idx = self.samples.partition_point(|s| s.video_time <= t);
        Some(if idx == 0 {
            first.value
        } else {
            self.samples[idx - 1].value
        })
    }
}

/// Parameters of the accelerating cursor used by RankTrace and GTrace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CursorDynamicsConfig {
    pub tick_ms: u64,
    pub base_step: f64,
    pub doubling_time_ms: u64,
    pub max_step: f64,
    /// Cursor units spanning the whole GTrace scale.
    pub gtrace_span: f64,
}

impl Default for CursorDynamicsConfig {
    fn default() -> Self {
        CursorDynamicsConfig {
            tick_ms: 50,
            base_step: 1.0,
            doubling_time_ms: 500,
            max_step: 32.0,
            gtrace_span: 192.0,
        }
    }
}

impl CursorDynamicsConfig {
    pub fn validate(&self) -> Result<(), AnnotationError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.tick_ms == 0 || self.doubling_time_ms == 0 {
            return Err(AnnotationError::InvalidConfig(
                "tick and doubling time must be positive".into(),
            ));
        }
        if !positive(self.base_step) || !positive(self.max_step) || !positive(self.gtrace_span) {
            return Err(AnnotationError::InvalidConfig(
                "step sizes and GTrace span must be positive".into(),
            ));
        }
        if self.base_step > self.max_step {
            return Err(AnnotationError::InvalidConfig(
                "base_step exceeds max_step".into(),
            ));
        }
        Ok(())
    }

    /// Cursor displacement for one tick after the key has been held for
    /// `held_ms`.
    pub fn step(&self, held_ms: u64) -> f64 {
        let exponent = held_ms as f64 / self.doubling_time_ms as f64;
        (self.base_step * exponent.exp2()).min(self.max_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Up,
    Down,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }
}

/// Incremental well-formedness check for an event stream.
///
/// Rules: times never decrease; a key is released only while held and is not
/// pressed twice without a release; `PAUSE`/`RESUME` and `BLUR`/`FOCUS`
/// alternate.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventStreamValidator {
    last_time: Option<u64>,
    up_held: bool,
    down_held: bool,
    paused: bool,
    blurred: bool,
    accepted: usize,
}

impl EventStreamValidator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn last_time(&self) -> Option<u64> {
        self.last_time
    }

    /// Whether playback is currently frozen by a pause or a blur.
    pub fn frozen(&self) -> bool {
        self.paused || self.blurred
    }

    pub fn push(&mut self, event: &InputEvent) -> Result<(), AnnotationError> {
        let index = self.accepted;
        if let Some(last) = self.last_time {
            if event.video_time < last {
                return Err(AnnotationError::malformed(
                    index,
                    format!("video_time {} precedes {}", event.video_time, last),
                ));
            }
        }
        let flag = |on: bool, expected: bool, what: &str| {
            if on == expected {
                Ok(())
            } else {
                Err(AnnotationError::malformed(index, what.to_string()))
            }
        };
        match event.kind {
            InputEventKind::KeyDownUp => {
                flag(self.up_held, false, "KEY_DOWN_UP while up is already held")?;
                self.up_held = true;
            }
            InputEventKind::KeyDownDown => {
                flag(self.down_held, false, "KEY_DOWN_DOWN while down is already held")?;
                self.down_held = true;
            }
            InputEventKind::KeyUpUp => {
                flag(self.up_held, true, "KEY_UP_UP without a matching KEY_DOWN_UP")?;
                self.up_held = false;
            }
            InputEventKind::KeyUpDown => {
                flag(self.down_held, true, "KEY_UP_DOWN without a matching KEY_DOWN_DOWN")?;
                self.down_held = false;
            }
            InputEventKind::Pause => {
                flag(self.paused, false, "PAUSE while already paused")?;
                self.paused = true;
            }
            InputEventKind::Resume => {
                flag(self.paused, true, "RESUME without a preceding PAUSE")?;
                self.paused = false;
            }
            InputEventKind::Blur => {
                flag(self.blurred, false, "BLUR while already blurred")?;
                self.blurred = true;
            }
            InputEventKind::Focus => {
                flag(self.blurred, true, "FOCUS without a preceding BLUR")?;
                self.blurred = false;
            }
        }
        self.last_time = Some(event.video_time);
        self.accepted += 1;
        Ok(())
    }
}

/// Checks a whole stream; see [`EventStreamValidator`].
pub fn validate_events(events: &[InputEvent]) -> Result<(), AnnotationError> {
    let mut validator = EventStreamValidator::new();
    events.iter().try_for_each(|e| validator.push(e))
}

/// Paused video time accumulated from `PAUSE`/`RESUME` and `BLUR`/`FOCUS`
/// spans up to `horizon`. Zero for clients that freeze video time correctly.
pub fn frozen_span(events: &[InputEvent], horizon: u64) -> u64 {
    let mut paused = false;
    let mut blurred = false;
    let mut since = 0;
    let mut total = 0;
    for e in events {
        let was = paused || blurred;
        match e.kind {
            InputEventKind::Pause => paused = true,
            InputEventKind::Resume => paused = false,
            InputEventKind::Blur => blurred = true,
            InputEventKind::Focus => blurred = false,
            _ => continue,
        }
        let now = paused || blurred;
        if !was && now {
            since = e.video_time;
        } else if was && !now {
            total += e.video_time.saturating_sub(since);
        }
    }
    if paused || blurred {
        total += horizon.saturating_sub(since);
    }
    total
}

/// Replays `events` up to the last event's video time.
pub fn replay(
    events: &[InputEvent],
    tool: ToolKind,
    config: &CursorDynamicsConfig,
    video_duration: u64,
) -> Result<Trace, AnnotationError> {
    let horizon = events.last().map_or(0, |e| e.video_time);
    replay_until(events, tool, config, video_duration, horizon)
}

/// Replays `events` and keeps simulating the cursor until `horizon`.
///
/// Ticks fall on multiples of `tick_ms`. A tick at `T` sees the key state
/// left by every event strictly before `T`; events stamped exactly `T` take
/// effect from the next tick on.
pub fn replay_until(
    events: &[InputEvent],
    tool: ToolKind,
    config: &CursorDynamicsConfig,
    video_duration: u64,
    horizon: u64,
) -> Result<Trace, AnnotationError> {
    config.validate()?;
    validate_events(events)?;
    if let Some(last) = events.last() {
        if last.video_time > video_duration {
            return Err(AnnotationError::malformed(
                events.len() - 1,
                format!(
                    "video_time {} exceeds video duration {}",
                    last.video_time, video_duration
                ),
            ));
        }
        if last.video_time > horizon {
            return Err(AnnotationError::malformed(
                events.len() - 1,
                format!("video_time {} beyond replay horizon {}", last.video_time, horizon),
            ));
        }
    }
    let horizon = horizon.min(video_duration);

    let samples = match tool {
        ToolKind::BTrace => replay_binary(events)?,
        ToolKind::RankTrace | ToolKind::GTrace => {
            CursorMachine::new(tool, config).run(events, horizon)
        }
    };
    Ok(Trace {
        session_id: String::new(),
        video_id: String::new(),
        tool,
        samples,
        video_duration,
        viewed_duration: horizon - frozen_span(events, horizon).min(horizon),
    })
}

fn replay_binary(events: &[InputEvent]) -> Result<Vec<TraceSample>, AnnotationError> {
    let mut samples: Vec<TraceSample> = Vec::new();
    let mut paused = false;
    let mut blurred = false;
    for (index, e) in events.iter().enumerate() {
        let value = match e.kind {
            InputEventKind::Pause => {
                paused = true;
                continue;
            }
            InputEventKind::Resume => {
                paused = false;
                continue;
            }
            InputEventKind::Blur => {
                blurred = true;
                continue;
            }
            InputEventKind::Focus => {
                blurred = false;
                continue;
            }
            InputEventKind::KeyDownUp => 1.0,
            InputEventKind::KeyDownDown => -1.0,
            InputEventKind::KeyUpUp | InputEventKind::KeyUpDown => continue,
        };
        if paused || blurred {
            continue;
        }
        if samples.last().is_some_and(|s| s.video_time == e.video_time) {
            return Err(AnnotationError::malformed(
                index,
                "two BTrace labels at the same video time",
            ));
        }
        samples.push(TraceSample::new(e.video_time, value));
    }
    Ok(samples)
}

struct CursorMachine<'a> {
    tool: ToolKind,
    config: &'a CursorDynamicsConfig,
    value: f64,
    up_held: bool,
    down_held: bool,
    paused: bool,
    blurred: bool,
    // Direction currently driving the cursor and the active clock reading at
    // which it started.
    active: Option<(Direction, u64)>,
    // Unpaused video time elapsed so far.
    clock: u64,
    clock_at: u64,
    samples: Vec<TraceSample>,
}

impl<'a> CursorMachine<'a> {
    fn new(tool: ToolKind, config: &'a CursorDynamicsConfig) -> Self {
        let value = tool.start_value().unwrap_or(0.0);
        CursorMachine {
            tool,
            config,
            value,
            up_held: false,
            down_held: false,
            paused: false,
            blurred: false,
            active: None,
            clock: 0,
            clock_at: 0,
            samples: vec![TraceSample::new(0, value)],
        }
    }

    fn frozen(&self) -> bool {
        self.paused || self.blurred
    }

    fn advance_clock(&mut self, t: u64) {
        if !self.frozen() {
            self.clock += t - self.clock_at;
        }
        self.clock_at = t;
    }

    fn apply(&mut self, e: &InputEvent) {
        self.advance_clock(e.video_time);
        match e.kind {
            InputEventKind::KeyDownUp => {
                self.up_held = true;
                self.active = Some((Direction::Up, self.clock));
            }
            InputEventKind::KeyDownDown => {
                self.down_held = true;
                self.active = Some((Direction::Down, self.clock));
            }
            InputEventKind::KeyUpUp => {
                self.up_held = false;
                if matches!(self.active, Some((Direction::Up, _))) {
                    self.active = self.down_held.then_some((Direction::Down, self.clock));
                }
            }
            InputEventKind::KeyUpDown => {
                self.down_held = false;
                if matches!(self.active, Some((Direction::Down, _))) {
                    self.active = self.up_held.then_some((Direction::Up, self.clock));
                }
            }
            InputEventKind::Pause => self.paused = true,
            InputEventKind::Resume => self.paused = false,
            InputEventKind::Blur => self.blurred = true,
            InputEventKind::Focus => self.blurred = false,
        }
    }

    fn tick(&mut self, t: u64) {
        self.advance_clock(t);
        if self.frozen() {
            return;
        }
        if let Some((dir, since)) = self.active {
            let step = self.config.step(self.clock - since) * dir.sign();
            let next = match self.tool {
                ToolKind::GTrace => (self.value + step / self.config.gtrace_span).clamp(0.0, 1.0),
                _ => self.value + step,
            };
            if next != self.value {
                self.value = next;
                self.samples.push(TraceSample::new(t, next));
                return;
            }
        }
        let last = self.samples.last().map_or(0, |s| s.video_time);
        if t - last >= HEARTBEAT_INTERVAL_MS {
            self.samples.push(TraceSample::new(t, self.value));
        }
    }

    fn run(mut self, events: &[InputEvent], horizon: u64) -> Vec<TraceSample> {
        let mut pending = events.iter().peekable();
        let mut t = self.config.tick_ms;
        while t <= horizon {
            while let Some(e) = pending.next_if(|e| e.video_time < t) {
                self.apply(e);
            }
            self.tick(t);
            t += self.config.tick_ms;
        }
        pending.for_each(|e| self.apply(e));
        self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionStatus {
    pub completed: bool,
    pub fraction_viewed: f64,
}

/// Completed iff at least a quarter of the video was seen.
pub fn completion_status(trace: &Trace) -> Result<CompletionStatus, AnnotationError> {
    completion_for(trace.viewed_duration, trace.video_duration)
}

pub fn completion_for(viewed: u64, duration: u64) -> Result<CompletionStatus, AnnotationError> {
    if duration == 0 {
        return Err(AnnotationError::ZeroDurationVideo);
    }
    let viewed = viewed.min(duration);
    Ok(CompletionStatus {
        // integer form of viewed / duration >= 1/4
        completed: viewed as u128 * 4 >= duration as u128,
        fraction_viewed: viewed as f64 / duration as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceValidation {
    pub accepted: bool,
    pub max_abs_deviation: f64,
}

/// Replays `events` and compares the result with a trace reported by the
/// client.
///
/// Continuous tools are compared as zero-order-hold signals at every sample
/// time of either trace. BTrace must match sample for sample.
pub fn validate_client_trace(
    claimed: &Trace,
    events: &[InputEvent],
    config: &CursorDynamicsConfig,
) -> Result<TraceValidation, AnnotationError> {
    let last_claimed = claimed.samples.last().map_or(0, |s| s.video_time);
    let last_event = events.last().map_or(0, |e| e.video_time);
    let horizon = last_claimed.max(last_event).min(claimed.video_duration);
    let replayed = replay_until(events, claimed.tool, config, claimed.video_duration, horizon)?;

    let mut times: Vec<u64> = claimed
        .samples
        .iter()
        .chain(&replayed.samples)
        .map(|s| s.video_time)
        .collect();
    times.sort_unstable();
    times.dedup();

    if claimed.tool == ToolKind::BTrace {
        let at = |trace: &Trace, t: u64| {
            trace
                .samples
                .binary_search_by_key(&t, |s| s.video_time)
                .map_or(0.0, |i| trace.samples[i].value)
        };
        let deviation = times
            .iter()
            .map(|&t| (at(claimed, t) - at(&replayed, t)).abs())
            .fold(0.0, f64::max);
        return Ok(TraceValidation {
            accepted: claimed.samples == replayed.samples,
            max_abs_deviation: deviation,
        });
    }

    if claimed.samples.is_empty() {
        return Ok(TraceValidation {
            accepted: false,
            max_abs_deviation: f64::INFINITY,
        });
    }
    let deviation = times
        .iter()
        .map(|&t| {
            let a = claimed.value_at(t).unwrap_or(f64::NAN);
            let b = replayed.value_at(t).unwrap_or(f64::NAN);
            (a - b).abs()
        })
        .fold(0.0, |acc: f64, d| if d.is_nan() { f64::INFINITY } else { acc.max(d) });
    Ok(TraceValidation {
        accepted: deviation <= REPLAY_TOLERANCE,
        max_abs_deviation: deviation,
    })
}
