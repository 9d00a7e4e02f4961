mod common;

use affectrace::annotation::{ToolKind, Trace, TraceSample};
use affectrace::signal::{self, min_max_normalise, WindowMetric, WindowingPolicy};
use proptest::prelude::*;

fn trace_from(tool: ToolKind, times: &[u64], values: &[f64], duration: u64) -> Trace {
    let mut t: Vec<u64> = times.iter().map(|x| x % duration).collect();
    t.sort_unstable();
    t.dedup();
    Trace {
        session_id: "s".into(),
        video_id: "v".into(),
        tool,
        samples: t.iter().zip(values.iter().cycle()).map(|(&t, &v)| TraceSample::new(t, v)).collect(),
        video_duration: duration,
        viewed_duration: duration,
    }
}

proptest! {
    #[test]
    fn window_count_ignores_sample_density(
        duration in 1u64..400_000,
        window in prop::sample::select(vec![1000u64, 2000, 3000, 5000]),
        times in prop::collection::vec(any::<u64>(), 1..200),
    ) {
        let trace = trace_from(ToolKind::RankTrace, &times, &[0.3, 1.7, -2.0], duration);
        let policy = WindowingPolicy::with_window_ms(window);
        for metric in [WindowMetric::Mean, WindowMetric::Gradient] {
            let s = signal::window(&trace, metric, &policy).unwrap();
            prop_assert_eq!(s.values.len(), (duration / window) as usize);
            let p = signal::process(&trace, metric, &policy).unwrap();
            prop_assert_eq!(p.values.len(), (duration / window) as usize);
        }
    }

    #[test]
    fn constant_trace_has_constant_mean_and_zero_gradient(
        c in -50.0f64..50.0,
        times in prop::collection::vec(any::<u64>(), 1..100),
    ) {
        let trace = trace_from(ToolKind::RankTrace, &times, &[c], 60_000);
        let policy = WindowingPolicy::default();
        let mean = signal::window(&trace, WindowMetric::Mean, &policy).unwrap();
        prop_assert!(mean.values.iter().flatten().all(|&v| v == c));
        let grad = signal::window(&trace, WindowMetric::Gradient, &policy).unwrap();
        prop_assert!(grad.values.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn monotone_trace_has_one_signed_gradient(
        steps in prop::collection::vec(0.0f64..3.0, 2..150),
        falling in any::<bool>(),
        resample in any::<bool>(),
    ) {
        let mut acc = 0.0;
        let values: Vec<f64> = steps.iter().map(|s| { acc += if falling { -s } else { *s }; acc }).collect();
        let times: Vec<u64> = (0..values.len() as u64).map(|i| i * 400).collect();
        let trace = trace_from(ToolKind::GTrace, &times, &values, 60_000);
        let policy = WindowingPolicy { resample, ..WindowingPolicy::default() };
        let s = signal::process(&trace, WindowMetric::Gradient, &policy).unwrap();
        if falling {
            prop_assert!(s.values.iter().flatten().all(|&v| v <= 0.0));
        } else {
            prop_assert!(s.values.iter().flatten().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn normalisation_is_idempotent(values in prop::collection::vec(-1e3f64..1e3, 1..60)) {
        let times: Vec<u64> = (0..values.len() as u64).map(|i| i * 250).collect();
        let trace = trace_from(ToolKind::RankTrace, &times, &values, 60_000);
        let once = min_max_normalise(&trace).unwrap().trace;
        let twice = min_max_normalise(&once).unwrap().trace;
        prop_assert!(once.values().all(|v| (0.0..=1.0).contains(&v)));
        prop_assert_eq!(once.samples, twice.samples);
    }

    #[test]
    fn event_sum_ignores_order_within_a_window(
        offsets in prop::collection::vec(0u64..3000, 1..20),
        signs in prop::collection::vec(any::<bool>(), 20),
        window_index in 0u64..10,
    ) {
        let mut offsets = offsets;
        offsets.sort_unstable();
        offsets.dedup();
        let base = window_index * 3000;
        let values: Vec<f64> = signs.iter().map(|&s| if s { 1.0 } else { -1.0 }).collect();
        let forward = Trace {
            session_id: "s".into(),
            video_id: "v".into(),
            tool: ToolKind::BTrace,
            samples: offsets.iter().zip(&values).map(|(o, &v)| TraceSample::new(base + o, v)).collect(),
            video_duration: 30_000,
            viewed_duration: 30_000,
        };
        let mut reversed = forward.clone();
        let rev_values: Vec<f64> = reversed.samples.iter().rev().map(|s| s.value).collect();
        for (s, v) in reversed.samples.iter_mut().zip(rev_values) {
            s.value = v;
        }
        let policy = WindowingPolicy::default();
        let a = signal::window(&forward, WindowMetric::Sum, &policy).unwrap();
        let b = signal::window(&reversed, WindowMetric::Sum, &policy).unwrap();
        prop_assert_eq!(a.values, b.values);
    }
}

#[test]
fn cleaning_reasons_follow_the_plan() {
    let (traces, plan) = common::planted_corpus();
    let out = signal::clean(traces, &signal::CleaningPolicy::default());
    assert_eq!(out.kept.len(), 92);
    assert_eq!(out.removed.len(), 16);
    for r in &out.removed {
        let session: usize = r.trace_id.split('/').next().unwrap().parse().unwrap();
        let expected = match plan[session - 1] {
            common::Planted::FewSamples => vec![signal::RemovalReason::TooFewSamples],
            common::Planted::ShortView => vec![signal::RemovalReason::TooShortView],
            common::Planted::Both => vec![signal::RemovalReason::TooFewSamples, signal::RemovalReason::TooShortView],
            common::Planted::Clean => panic!("clean trace {} removed", r.trace_id),
        };
        assert_eq!(r.reasons, expected, "{}", r.trace_id);
    }
}
