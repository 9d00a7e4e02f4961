//! Replays one keyboard timeline with each of the three tools and checks a
//! client-reported trace against the server replay.

use affectrace::annotation::{replay, validate_client_trace, CursorDynamicsConfig, InputEvent, InputEventKind, ToolKind};

fn main() {
    use InputEventKind::*;
    let events: Vec<InputEvent> = [
        (1_000, KeyDownUp),
        (2_500, KeyUpUp),
        (4_000, KeyDownDown),
        (4_300, KeyUpDown),
        (5_000, Pause),
        (5_000, Resume),
        (6_000, KeyDownUp),
        (9_000, KeyUpUp),
        (10_000, Pause),
    ]
    .iter()
    .map(|&(t, k)| InputEvent::new(t, k))
    .collect();

    let config = CursorDynamicsConfig::default();
    for tool in ToolKind::ALL {
        let trace = replay(&events, tool, &config, 60_000).expect("well-formed stream");
        println!("{} ({} samples, viewed {} ms)", tool.display_name(), trace.samples.len(), trace.viewed_duration);
        for t in (0..=10_000).step_by(1_000) {
            print!(" {:>7.3}", trace.value_at(t).unwrap_or(f64::NAN));
        }
        println!("\n");
    }

    let mut claimed = replay(&events, ToolKind::GTrace, &config, 60_000).unwrap();
    let ok = validate_client_trace(&claimed, &events, &config).unwrap();
    claimed.samples[3].value += 0.01;
    let tampered = validate_client_trace(&claimed, &events, &config).unwrap();
    println!("client trace as replayed: accepted={} deviation={:.1e}", ok.accepted, ok.max_abs_deviation);
    println!("client trace off by 0.01: accepted={} deviation={:.1e}", tampered.accepted, tampered.max_abs_deviation);
}
