//! Cleaning, min-max normalisation, resampling and the three window metrics.

use affectrace::annotation::{ToolKind, Trace, TraceSample};
use affectrace::signal::{self, min_max_normalise, CleaningPolicy, WindowMetric, WindowingPolicy};

fn trace(session: &str, tool: ToolKind, points: &[(u64, f64)], duration: u64, viewed: u64) -> Trace {
    Trace {
        session_id: session.into(),
        video_id: "clip".into(),
        tool,
        samples: points.iter().map(|&(t, v)| TraceSample::new(t, v)).collect(),
        video_duration: duration,
        viewed_duration: viewed,
    }
}

fn show(label: &str, values: &[Option<f64>]) {
    let cells: Vec<String> = values.iter().map(|v| v.map_or("--".into(), |x| format!("{x:.3}"))).collect();
    println!("{label:<10} {}", cells.join(" "));
}

fn main() {
    let rising: Vec<(u64, f64)> = (0..=24).map(|i| (i * 500, i as f64 * 2.0)).collect();
    let corpus = vec![
        trace("1", ToolKind::RankTrace, &rising, 121_500, 121_500),
        trace("2", ToolKind::RankTrace, &[(0, 0.0), (500, 1.0)], 121_500, 121_500),
        trace("3", ToolKind::GTrace, &rising, 121_500, 40_000),
    ];
    let cleaned = signal::clean(corpus, &CleaningPolicy::default());
    println!("kept {:?}", cleaned.kept.iter().map(|t| t.trace_id()).collect::<Vec<_>>());
    for r in &cleaned.removed {
        println!("removed {} {:?}", r.trace_id, r.reasons);
    }

    let t = &cleaned.kept[0];
    let n = min_max_normalise(t).unwrap();
    println!("\nnormalised range {:?}..{:?}", n.trace.samples.first().map(|s| s.value), n.trace.samples.last().map(|s| s.value));

    let policy = WindowingPolicy::with_window_ms(3000);
    println!("{} windows for a {} ms video (tail dropped)\n", policy.window_count(t.video_duration), t.video_duration);
    let head = |v: Vec<Option<f64>>| v.into_iter().take(6).collect::<Vec<_>>();
    show("mean", &head(signal::process(t, WindowMetric::Mean, &policy).unwrap().values));
    show("gradient", &head(signal::process(t, WindowMetric::Gradient, &policy).unwrap().values));

    let btrace = trace("4", ToolKind::BTrace, &[(500, 1.0), (900, 1.0), (2_000, -1.0), (7_000, -1.0)], 12_000, 8_500);
    show("sum", &signal::process(&btrace, WindowMetric::Sum, &policy).unwrap().values);
}
