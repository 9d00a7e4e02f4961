mod common;

use affectrace::annotation::{
    replay, validate_client_trace, CursorDynamicsConfig, InputEvent, InputEventKind, ToolKind, Trace,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DURATION: u64 = 120_000;

fn tool_strategy() -> impl Strategy<Value = ToolKind> {
    prop_oneof![Just(ToolKind::RankTrace), Just(ToolKind::GTrace), Just(ToolKind::BTrace)]
}

fn fuzzed(seed: u64) -> Vec<InputEvent> {
    common::fuzz_events(&mut ChaCha8Rng::seed_from_u64(seed), DURATION)
}

fn run(events: &[InputEvent], tool: ToolKind) -> Trace {
    replay(events, tool, &CursorDynamicsConfig::default(), DURATION).unwrap()
}

proptest! {
    #[test]
    fn replay_is_deterministic(seed in any::<u64>(), tool in tool_strategy()) {
        let events = fuzzed(seed);
        let a = run(&events, tool);
        let b = run(&events, tool);
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn gtrace_stays_in_unit_interval(seed in any::<u64>()) {
        let trace = run(&fuzzed(seed), ToolKind::GTrace);
        prop_assert!(trace.values().all(|v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn zero_length_pause_changes_nothing(seed in any::<u64>(), tool in tool_strategy(), at in any::<prop::sample::Index>()) {
        let events = fuzzed(seed);
        let after = if events.is_empty() { None } else { Some(at.index(events.len())) };
        if let Some(paused) = common::insert_pause(&events, after) {
            prop_assert_eq!(run(&events, tool).samples, run(&paused, tool).samples);
        }
    }

    #[test]
    fn btrace_emits_one_sample_per_running_key_press(seed in any::<u64>()) {
        let events = fuzzed(seed);
        let mut paused = false;
        let mut blurred = false;
        let mut presses = 0;
        for e in &events {
            match e.kind {
                InputEventKind::Pause => paused = true,
                InputEventKind::Resume => paused = false,
                InputEventKind::Blur => blurred = true,
                InputEventKind::Focus => blurred = false,
                InputEventKind::KeyDownUp | InputEventKind::KeyDownDown if !paused && !blurred => presses += 1,
                _ => {}
            }
        }
        prop_assert_eq!(run(&events, ToolKind::BTrace).samples.len(), presses);
    }

    #[test]
    fn btrace_without_pauses_counts_every_key_down(seed in any::<u64>()) {
        let events: Vec<InputEvent> = fuzzed(seed)
            .into_iter()
            .filter(|e| matches!(e.kind, InputEventKind::KeyDownUp | InputEventKind::KeyDownDown | InputEventKind::KeyUpUp | InputEventKind::KeyUpDown))
            .collect();
        let downs = events.iter().filter(|e| matches!(e.kind, InputEventKind::KeyDownUp | InputEventKind::KeyDownDown)).count();
        let trace = run(&events, ToolKind::BTrace);
        prop_assert_eq!(trace.samples.len(), downs);
        prop_assert!(trace.values().all(|v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn step_is_monotone_and_capped(a in 0u64..20_000, b in 0u64..20_000) {
        let cfg = CursorDynamicsConfig::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(cfg.step(lo) <= cfg.step(hi));
        prop_assert!(cfg.step(hi) <= cfg.max_step);
    }

    #[test]
    fn replayed_trace_validates_against_itself(seed in any::<u64>(), tool in tool_strategy()) {
        let events = fuzzed(seed);
        let trace = run(&events, tool);
        let v = validate_client_trace(&trace, &events, &CursorDynamicsConfig::default()).unwrap();
        prop_assert!(v.accepted);
        prop_assert_eq!(v.max_abs_deviation, 0.0);
    }

    #[test]
    fn samples_are_time_ordered_and_within_horizon(seed in any::<u64>(), tool in tool_strategy()) {
        let events = fuzzed(seed);
        let trace = run(&events, tool);
        let horizon = events.last().map_or(0, |e| e.video_time);
        prop_assert!(trace.samples.windows(2).all(|p| p[0].video_time < p[1].video_time));
        prop_assert!(trace.samples.iter().all(|s| s.video_time <= horizon));
        prop_assert!(trace.viewed_duration <= trace.video_duration);
    }
}

#[test]
fn rank_trace_exceeds_any_bound_with_a_long_hold() {
    let bound = 10_000.0;
    let events = [
        InputEvent::new(0, InputEventKind::KeyDownUp),
        InputEvent::new(60_000, InputEventKind::KeyUpUp),
    ];
    let trace = replay(&events, ToolKind::RankTrace, &CursorDynamicsConfig::default(), 60_000).unwrap();
    let top = trace.values().fold(f64::MIN, f64::max);
    assert!(top > bound, "max {top}");
}

#[test]
fn gtrace_held_at_bound_only_heartbeats() {
    let events = [
        InputEvent::new(0, InputEventKind::KeyDownUp),
        InputEvent::new(20_000, InputEventKind::KeyUpUp),
    ];
    let trace = replay(&events, ToolKind::GTrace, &CursorDynamicsConfig::default(), 20_000).unwrap();
    let first_top = trace.samples.iter().position(|s| s.value == 1.0).expect("reaches the bound");
    let after = &trace.samples[first_top..];
    assert!(after.iter().all(|s| s.value == 1.0));
    assert!(after.windows(2).all(|p| p[1].video_time - p[0].video_time >= 1000));
}
