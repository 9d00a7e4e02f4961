//! Independent oracles and generators shared by the integration tests.

#![allow(dead_code)]

use affectrace::annotation::{InputEvent, InputEventKind, ToolKind, Trace, TraceSample};
use affectrace::reliability::MeasurementLevel;
use rand::Rng;

/// Krippendorff's alpha computed straight from the definition: every ordered
/// pair of values inside a unit, weighted by `1/(m_u - 1)`, against every
/// ordered pair of pairable values overall. Returns `None` when no unit has
/// two values.
pub fn oracle_alpha(rows: &[Vec<Option<f64>>], level: MeasurementLevel) -> Option<f64> {
    let units = rows[0].len();
    let unit_values: Vec<Vec<f64>> = (0..units)
        .map(|u| rows.iter().filter_map(|r| r[u]).collect::<Vec<f64>>())
        .filter(|v| v.len() >= 2)
        .collect();
    let pool: Vec<f64> = unit_values.iter().flatten().copied().collect();
    if pool.is_empty() {
        return None;
    }
    let n = pool.len() as f64;
    let count = |x: f64| pool.iter().filter(|&&y| y == x).count() as f64;
    let delta = |a: f64, b: f64| -> f64 {
        if a == b {
            return 0.0;
        }
        match level {
            MeasurementLevel::Nominal => 1.0,
            MeasurementLevel::Interval => (a - b) * (a - b),
            MeasurementLevel::Ordinal => {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let between = pool.iter().filter(|&&g| g >= lo && g <= hi).count() as f64;
                let d = between - (count(a) + count(b)) / 2.0;
                d * d
            }
        }
    };

    let mut observed = 0.0;
    for values in &unit_values {
        let m = values.len() as f64;
        for (i, &a) in values.iter().enumerate() {
            for (j, &b) in values.iter().enumerate() {
                if i != j {
                    observed += delta(a, b) / (m - 1.0);
                }
            }
        }
    }
    let mut expected = 0.0;
    for (i, &a) in pool.iter().enumerate() {
        for (j, &b) in pool.iter().enumerate() {
            if i != j {
                expected += delta(a, b);
            }
        }
    }
    let d_o = observed / n;
    let d_e = expected / (n * (n - 1.0));
    Some(if d_e == 0.0 { 1.0 } else { 1.0 - d_o / d_e })
}

/// Random matrix with at most `max_raters` raters, `max_units` units and
/// `max_values` distinct values; each cell is missing with probability
/// `missing`.
pub fn random_matrix(
    rng: &mut impl Rng,
    max_raters: usize,
    max_units: usize,
    max_values: usize,
    missing: f64,
) -> Vec<Vec<Option<f64>>> {
    let raters = rng.random_range(2..=max_raters);
    let units = rng.random_range(1..=max_units);
    let palette_len = rng.random_range(1..=max_values);
    let palette: Vec<f64> = (0..palette_len).map(|_| rng.random_range(-5.0..5.0)).collect();
    (0..raters)
        .map(|_| {
            (0..units)
                .map(|_| {
                    if rng.random_bool(missing) {
                        None
                    } else {
                        Some(palette[rng.random_range(0..palette_len)])
                    }
                })
                .collect()
        })
        .collect()
}

/// Well-formed random event stream ending at or before `duration`, with at
/// most one key press per video time.
pub fn fuzz_events(rng: &mut impl Rng, duration: u64) -> Vec<InputEvent> {
    use InputEventKind::*;
    let target = rng.random_range(0..60);
    let mut events = Vec::with_capacity(target);
    let (mut up, mut down, mut paused, mut blurred) = (false, false, false, false);
    let mut t = 0u64;
    let mut last_down = None;
    for _ in 0..target {
        t += match rng.random_range(0..10) {
            0 => 0,
            1..=6 => rng.random_range(1..1500),
            _ => rng.random_range(1500..6000),
        };
        if t > duration {
            break;
        }
        let mut options = vec![if up { KeyUpUp } else { KeyDownUp }, if down { KeyUpDown } else { KeyDownDown }];
        if rng.random_bool(0.15) {
            options.push(if paused { Resume } else { Pause });
            options.push(if blurred { Focus } else { Blur });
        }
        // BTrace allows one label per video time.
        if last_down == Some(t) {
            options.retain(|k| !matches!(k, KeyDownUp | KeyDownDown));
        }
        if options.is_empty() {
            continue;
        }
        let kind = options[rng.random_range(0..options.len())];
        if matches!(kind, KeyDownUp | KeyDownDown) {
            last_down = Some(t);
        }
        match kind {
            KeyDownUp | KeyUpUp => up = !up,
            KeyDownDown | KeyUpDown => down = !down,
            Pause | Resume => paused = !paused,
            Blur | Focus => blurred = !blurred,
        }
        events.push(InputEvent::new(t, kind));
    }
    events
}

/// Inserts a zero-length PAUSE/RESUME pair after event `after` (or at the
/// start when `None`), provided playback is running there.
pub fn insert_pause(events: &[InputEvent], after: Option<usize>) -> Option<Vec<InputEvent>> {
    let split = after.map_or(0, |i| i + 1);
    let paused = events[..split].iter().fold(false, |p, e| match e.kind {
        InputEventKind::Pause => true,
        InputEventKind::Resume => false,
        _ => p,
    });
    if paused {
        return None;
    }
    let t = after.map_or(0, |i| events[i].video_time);
    let mut out = events[..split].to_vec();
    out.push(InputEvent::new(t, InputEventKind::Pause));
    out.push(InputEvent::new(t, InputEventKind::Resume));
    out.extend_from_slice(&events[split..]);
    Some(out)
}

/// A planted cleaning violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Planted {
    Clean,
    FewSamples,
    ShortView,
    Both,
}

/// Trace with `n` samples, one per second, viewed for `viewed_ms`.
pub fn synthetic_trace(session: u64, video: &str, tool: ToolKind, n: usize, viewed_ms: u64) -> Trace {
    let samples = (0..n)
        .map(|i| {
            let value = match tool {
                ToolKind::BTrace => {
                    if i % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                _ => (i as f64 * 0.37).sin(),
            };
            TraceSample::new(i as u64 * 1000, value)
        })
        .collect();
    Trace {
        session_id: session.to_string(),
        video_id: video.to_string(),
        tool,
        samples,
        video_duration: 120_000,
        viewed_duration: viewed_ms,
    }
}

/// 108 traces over 3 videos and 3 tools with 16 planted violations,
/// returned alongside the plan.
pub fn planted_corpus() -> (Vec<Trace>, Vec<Planted>) {
    let mut plan = vec![Planted::Clean; 108];
    for i in [3, 17, 29, 44, 61, 77] {
        plan[i] = Planted::FewSamples;
    }
    for i in [5, 12, 38, 50, 66, 83, 95] {
        plan[i] = Planted::ShortView;
    }
    for i in [20, 71, 104] {
        plan[i] = Planted::Both;
    }
    let videos = ["apex", "got", "semaine"];
    let traces = plan
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let tool = ToolKind::ALL[i % 3];
            let video = videos[(i / 3) % 3];
            let (n, viewed) = match p {
                Planted::Clean => (90, 120_000),
                Planted::FewSamples => (2, 120_000),
                Planted::ShortView => (40, 45_000),
                Planted::Both => (1, 30_000),
            };
            synthetic_trace(i as u64 + 1, video, tool, n, viewed)
        })
        .collect();
    (traces, plan)
}

pub mod study {
    use std::sync::Arc;

    use affectrace::annotation::{replay, CursorDynamicsConfig, ToolKind};
    use affectrace::service::{
        Entry, ManualClock, PasswordCost, ProjectConfig, ProjectService, ServiceConfig, VideoKind, VideoOrdering,
        VideoSource,
    };
    use affectrace::simulate::{annotator_events, LatentCurve};
    use affectrace::store::{ProjectId, Store};
    use chrono::{TimeZone, Utc};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const VIDEO_MS: u64 = 60_000;

    pub fn service(store: Store, seed: u64) -> ProjectService {
        let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap()));
        let config = ServiceConfig {
            password_cost: PasswordCost::insecure_fast(),
            rng_seed: Some(seed),
            ..ServiceConfig::default()
        };
        ProjectService::new(store, config, clock)
    }

    pub fn config(tool: ToolKind, link_key: &str) -> ProjectConfig {
        ProjectConfig {
            title: format!("{tool} study"),
            target_label: "Arousal".into(),
            tool,
            videos: ["a", "b"]
                .iter()
                .map(|id| VideoSource {
                    id: id.to_string(),
                    kind: VideoKind::Youtube,
                    locator: "https://www.youtube.com/watch?v=abcdefghijk".into(),
                    duration_ms: VIDEO_MS,
                })
                .collect(),
            ordering: VideoOrdering::Sequence,
            endless: false,
            sound: false,
            pre_message: String::new(),
            post_message: "Thank you".into(),
            survey_link: None,
            link_key: Some(link_key.into()),
        }
    }

    /// Creates a project and runs `participants` simulated annotators through
    /// the service, uploading events and client-side samples in batches.
    pub fn annotate(svc: &ProjectService, owner: &str, tool: ToolKind, participants: usize, seed: u64) -> ProjectId {
        if svc.login(owner, "long enough password").is_err() {
            svc.register(owner, "long enough password").unwrap();
        }
        let key = format!("{}-{seed}", tool.as_str().to_lowercase());
        let created = svc.create_project(owner, config(tool, &key)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = CursorDynamicsConfig::default();
        for _ in 0..participants {
            let session = svc.start_session(&key, None, false).unwrap();
            for index in 0..2 {
                let curve = LatentCurve::random(&mut rng);
                let view_ms = rng.random_range(5_000..=VIDEO_MS);
                let events = annotator_events(tool, |t| curve.value(t), view_ms, || rng.random_range(0..100));
                let trace = replay(&events, tool, &cfg, VIDEO_MS).unwrap();
                let mut entries: Vec<(u64, Entry)> = events
                    .iter()
                    .map(|e| (e.video_time, Entry::Event { video_time: e.video_time, kind: e.kind }))
                    .chain(trace.samples.iter().map(|s| {
                        (s.video_time, Entry::Sample { video_time: s.video_time, value: s.value })
                    }))
                    .collect();
                entries.sort_by_key(|e| e.0);
                for batch in entries.chunks(50) {
                    let batch: Vec<Entry> = batch.iter().map(|e| e.1.clone()).collect();
                    svc.append_entries(session.session_id, index, &batch).unwrap();
                }
                svc.finish_video(session.session_id, index).unwrap();
            }
        }
        created.project_id
    }
}
