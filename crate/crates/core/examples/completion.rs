//! The quarter-viewed completion rule, including paused spans that do not
//! count as viewing.

use affectrace::annotation::{completion_for, frozen_span, InputEvent, InputEventKind};

fn main() {
    for (viewed, duration) in [(25_000, 100_000), (24_990, 100_000), (30_000, 120_000), (0, 90_000)] {
        let c = completion_for(viewed, duration).unwrap();
        println!("{viewed:>6} of {duration} ms viewed -> fraction {:.4}, completed {}", c.fraction_viewed, c.completed);
    }

    // A client that keeps advancing video time during a blur.
    let events = [
        InputEvent::new(10_000, InputEventKind::Blur),
        InputEvent::new(40_000, InputEventKind::Focus),
        InputEvent::new(45_000, InputEventKind::Pause),
    ];
    let frozen = frozen_span(&events, 45_000);
    let viewed = 45_000 - frozen;
    let c = completion_for(viewed, 100_000).unwrap();
    println!("\nlast event at 45 000 ms, {frozen} ms blurred -> viewed {viewed} ms, completed {}", c.completed);
}
