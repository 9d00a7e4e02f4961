//! Synthetic annotators.
//!
//! Each video gets a smooth latent arousal curve. A simulated annotator
//! perceives that curve (optionally mixed with a private curve), decides once
//! per second whether it is rising or falling, and presses keys accordingly.
//! The resulting keyboard streams go through the same replay as real ones.

use std::f64::consts::TAU;

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotation::{replay, CursorDynamicsConfig, InputEvent, InputEventKind, ToolKind};
use crate::store::{LogRecord, Payload, StatusCode, VideoStatus};

/// Sum of a few slow sinusoids.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCurve {
    components: Vec<(f64, f64, f64)>,
}

impl LatentCurve {
    pub fn random(rng: &mut impl Rng) -> Self {
        let components = (0..4)
            .map(|_| {
                let amplitude = rng.random_range(0.2..1.0);
                let period_s = rng.random_range(6.0..40.0);
                let phase = rng.random_range(0.0..TAU);
                (amplitude, 1.0 / (period_s * 1000.0), phase)
            })
            .collect();
        LatentCurve { components }
    }

    pub fn value(&self, t_ms: u64) -> f64 {
        self.components
            .iter()
            .map(|&(a, f, p)| a * (TAU * f * t_ms as f64 + p).sin())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnnotatorModel {
    /// Everyone presses exactly the same keys at the same times.
    Identical,
    /// Shared latent curve plus a private curve scaled by `noise`, with
    /// reaction-time jitter.
    Shared { noise: f64 },
    /// Every annotator follows a private curve.
    Independent,
}

const DECISION_MS: u64 = 1000;

/// Keyboard stream of an annotator following `perceived` for `view_ms`.
/// Ends with a PAUSE at `view_ms`, where the participant stops watching.
pub fn annotator_events(
    tool: ToolKind,
    perceived: impl Fn(u64) -> f64,
    view_ms: u64,
    mut jitter: impl FnMut() -> u64,
) -> Vec<InputEvent> {
    let mut events = Vec::new();
    let mut k = 0;
    while (k + 1) * DECISION_MS <= view_ms {
        let t0 = k * DECISION_MS;
        k += 1;
        let change = perceived(t0 + DECISION_MS) - perceived(t0);
        let (up, down) = (InputEventKind::KeyDownUp, InputEventKind::KeyDownDown);
        let (press_kind, release_kind) = if change > 0.0 {
            (up, InputEventKind::KeyUpUp)
        } else {
            (down, InputEventKind::KeyUpDown)
        };
        let hold = match tool {
            ToolKind::BTrace if change.abs() > 0.15 => 100,
            ToolKind::BTrace => continue,
            _ if change.abs() < 0.05 => continue,
            _ => ((change.abs() * 1500.0 / 50.0).round() as u64 * 50).clamp(50, 850),
        };
        let press = t0 + jitter().min(99);
        let release = press + hold;
        if release >= view_ms {
            break;
        }
        events.push(InputEvent::new(press, press_kind));
        events.push(InputEvent::new(release, release_kind));
    }
    events.push(InputEvent::new(view_ms, InputEventKind::Pause));
    events
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyVideo {
    pub id: String,
    pub duration_ms: u64,
}

/// Annotators of one (video, tool) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCell {
    pub video: String,
    pub tool: ToolKind,
    pub traces: usize,
    /// The first `short_views` annotators stop after 45 s.
    pub short_views: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyDesign {
    pub videos: Vec<StudyVideo>,
    pub cells: Vec<StudyCell>,
    pub model: AnnotatorModel,
    pub seed: u64,
}

impl StudyDesign {
    /// Three two-minute videos, three tools, between 8 and 14 traces per
    /// pair.
    pub fn three_by_three(model: AnnotatorModel, seed: u64) -> Self {
        let videos = ["apex", "got", "semaine"]
            .iter()
            .map(|id| StudyVideo {
                id: id.to_string(),
                duration_ms: 120_000,
            })
            .collect();
        let counts = [
            (ToolKind::RankTrace, [11, 10, 10]),
            (ToolKind::GTrace, [11, 12, 8]),
            (ToolKind::BTrace, [9, 8, 14]),
        ];
        let cells = counts
            .iter()
            .flat_map(|&(tool, per_video)| {
                ["apex", "got", "semaine"]
                    .iter()
                    .zip(per_video)
                    .map(move |(video, traces)| StudyCell {
                        video: video.to_string(),
                        tool,
                        traces,
                        short_views: 0,
                    })
            })
            .collect();
        StudyDesign {
            videos,
            cells,
            model,
            seed,
        }
    }
}

/// Log records of a whole simulated study, one session per trace, as the
/// service would have stored them.
pub fn simulate_study(design: &StudyDesign) -> Vec<LogRecord> {
    let config = CursorDynamicsConfig::default();
    let start: DateTime<Utc> = Utc.with_ymd_and_hms(2024, 1, 1, 12, 0, 0).unwrap();
    let mut master = ChaCha8Rng::seed_from_u64(design.seed);
    let latents: Vec<LatentCurve> = design.videos.iter().map(|_| LatentCurve::random(&mut master)).collect();

    let mut records = Vec::new();
    let mut session = 0u64;
    for cell in &design.cells {
        let Some(video_idx) = design.videos.iter().position(|v| v.id == cell.video) else {
            continue;
        };
        let video = &design.videos[video_idx];
        let latent = &latents[video_idx];
        for annotator in 0..cell.traces {
            session += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(design.seed ^ session.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let private = LatentCurve::random(&mut rng);
            let view_ms = if annotator < cell.short_views {
                45_000
            } else {
                video.duration_ms
            };
            let events = match design.model {
                AnnotatorModel::Identical => annotator_events(cell.tool, |t| latent.value(t), view_ms, || 0),
                AnnotatorModel::Shared { noise } => annotator_events(
                    cell.tool,
                    |t| latent.value(t) + noise * private.value(t),
                    view_ms,
                    || rng.random_range(0..100),
                ),
                AnnotatorModel::Independent => annotator_events(
                    cell.tool,
                    |t| private.value(t),
                    view_ms,
                    || rng.random_range(0..100),
                ),
            };
            let trace = replay(&events, cell.tool, &config, video.duration_ms).expect("simulated streams are well formed");

            let mut rows: Vec<(u64, u8, Payload)> = vec![(0, 0, Payload::Status(StatusCode::Open {
                duration_ms: video.duration_ms,
            }))];
            rows.extend(events.iter().map(|e| (e.video_time, 1, Payload::Event(e.kind))));
            rows.extend(trace.samples.iter().map(|s| (s.video_time, 2, Payload::Sample(s.value))));
            let status = if view_ms * 4 >= video.duration_ms {
                VideoStatus::Completed
            } else {
                VideoStatus::Abandoned
            };
            let code = match status {
                VideoStatus::Completed => StatusCode::Completed,
                _ => StatusCode::Abandoned,
            };
            rows.push((view_ms, 3, Payload::Status(code)));
            rows.sort_by_key(|r| (r.0, r.1));

            let stamp = start + chrono::Duration::minutes(session as i64);
            records.extend(rows.into_iter().enumerate().map(|(seq, (t, _, payload))| LogRecord {
                project_id: "1".into(),
                session_id: session.to_string(),
                participant_id: format!("p{session:03}"),
                video_id: cell.video.clone(),
                tool: cell.tool,
                video_time: t,
                payload: match payload {
                    Payload::Sample(v) => Payload::Sample(crate::store::quantise_value(v)),
                    other => other,
                },
                server_received: stamp + chrono::Duration::milliseconds(t as i64),
                sequence: seq as u64,
            }));
        }
    }
    records
}
