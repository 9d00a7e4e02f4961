//! Collects annotations through the service, exports the project log,
//! imports it back and checks the stored samples against event replay.

use std::sync::Arc;

use affectrace::annotation::{replay, CursorDynamicsConfig, ToolKind};
use affectrace::service::{
    Entry, ManualClock, PasswordCost, ProjectConfig, ProjectService, ServiceConfig, VideoKind, VideoOrdering,
    VideoSource,
};
use affectrace::simulate::{annotator_events, LatentCurve};
use affectrace::store::{import_csv, Store};
use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2024, 5, 1, 10, 0, 0).unwrap()));
    let config = ServiceConfig {
        password_cost: PasswordCost::insecure_fast(),
        rng_seed: Some(1),
        ..ServiceConfig::default()
    };
    let svc = ProjectService::new(Store::in_memory(), config, clock.clone());
    svc.register("alice", "long enough password").unwrap();
    let project = svc
        .create_project(
            "alice",
            ProjectConfig {
                title: "Trailer arousal".into(),
                target_label: "Arousal".into(),
                tool: ToolKind::GTrace,
                videos: vec![VideoSource {
                    id: "trailer".into(),
                    kind: VideoKind::Youtube,
                    locator: "https://www.youtube.com/watch?v=abcdefghijk".into(),
                    duration_ms: 30_000,
                }],
                ordering: VideoOrdering::Sequence,
                endless: false,
                sound: true,
                pre_message: String::new(),
                post_message: "Thanks".into(),
                survey_link: None,
                link_key: Some("trailer-study".into()),
            },
        )
        .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dynamics = CursorDynamicsConfig::default();
    for _ in 0..3 {
        let session = svc.start_session("trailer-study", None, false).unwrap();
        let curve = LatentCurve::random(&mut rng);
        let events = annotator_events(ToolKind::GTrace, |t| curve.value(t), 30_000, || rng.random_range(0..100));
        let trace = replay(&events, ToolKind::GTrace, &dynamics, 30_000).unwrap();
        let mut entries: Vec<(u64, Entry)> = events
            .iter()
            .map(|e| (e.video_time, Entry::Event { video_time: e.video_time, kind: e.kind }))
            .chain(trace.samples.iter().map(|s| (s.video_time, Entry::Sample { video_time: s.video_time, value: s.value })))
            .collect();
        entries.sort_by_key(|e| e.0);
        for batch in entries.chunks(50) {
            clock.advance_ms(2_000);
            let batch: Vec<Entry> = batch.iter().map(|e| e.1.clone()).collect();
            svc.append_entries(session.session_id, 0, &batch).unwrap();
        }
        let finish = svc.finish_video(session.session_id, 0).unwrap();
        println!("session {} -> {:?}", session.session_id, finish.status);
    }

    let csv = svc.export_csv("alice", project.project_id).unwrap();
    let text = String::from_utf8_lossy(&csv);
    println!("\n{} rows; first lines:", text.lines().count() - 1);
    for line in text.lines().take(4) {
        println!("  {line}");
    }

    let imported = import_csv(csv.as_slice()).unwrap();
    println!("\nre-export byte-identical: {}", imported.to_csv() == csv);
    for (id, check) in imported.reconstruction_check(&dynamics) {
        println!("{id}: replay matches stored samples: {} (max deviation {:.1e})", check.accepted, check.max_abs_deviation);
    }
}
