//! Cleaning, normalisation, resampling and equal-length windowing of traces.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{ToolKind, Trace, TraceSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("trace {0} has no samples")]
    EmptyTrace(String),
    #[error("metric {metric} cannot be computed for {tool} traces")]
    IncompatibleMetric { metric: WindowMetric, tool: ToolKind },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningPolicy {
    pub min_samples: usize,
    pub min_view_ms: u64,
}

impl Default for CleaningPolicy {
    fn default() -> Self {
        CleaningPolicy {
            min_samples: 3,
            min_view_ms: 60_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RemovalReason {
    TooFewSamples,
    TooShortView,
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemovalReason::TooFewSamples => "TOO_FEW_SAMPLES",
            RemovalReason::TooShortView => "TOO_SHORT_VIEW",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedTrace {
    pub trace_id: String,
    pub reasons: Vec<RemovalReason>,
}

#[derive(Debug, Clone, Default)]
pub struct CleanOutcome {
    pub kept: Vec<Trace>,
    pub removed: Vec<RemovedTrace>,
}

/// Drops traces with fewer than `min_samples` samples or less than
/// `min_view_ms` of viewing. Input order is preserved in both outputs.
pub fn clean(traces: impl IntoIterator<Item = Trace>, policy: &CleaningPolicy) -> CleanOutcome {
    let mut out = CleanOutcome::default();
    for trace in traces {
        let mut reasons = Vec::new();
        if trace.samples.len() < policy.min_samples {
            reasons.push(RemovalReason::TooFewSamples);
        }
        if trace.viewed_duration < policy.min_view_ms {
            reasons.push(RemovalReason::TooShortView);
        }
        if reasons.is_empty() {
            out.kept.push(trace);
        } else {
            out.removed.push(RemovedTrace {
                trace_id: trace.trace_id(),
                reasons,
            });
        }
    }
    out
}

/// Per-window aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WindowMetric {
    /// Average gradient, a relative measure.
    Gradient,
    /// Mean level, an absolute measure.
    Mean,
    /// Signed count of BTrace labels.
    Sum,
}

impl WindowMetric {
    pub fn compatible_with(self, tool: ToolKind) -> bool {
        match self {
            WindowMetric::Sum => tool == ToolKind::BTrace,
            WindowMetric::Mean | WindowMetric::Gradient => tool.is_continuous(),
        }
    }

    /// The metrics computed for traces of `tool`.
    pub fn for_tool(tool: ToolKind) -> &'static [WindowMetric] {
        match tool {
            ToolKind::BTrace => &[WindowMetric::Sum],
            _ => &[WindowMetric::Gradient, WindowMetric::Mean],
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            WindowMetric::Gradient => "Δ_A",
            WindowMetric::Mean => "μ_A",
            WindowMetric::Sum => "Σ_A",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WindowMetric::Gradient => "GRADIENT",
            WindowMetric::Mean => "MEAN",
            WindowMetric::Sum => "SUM",
        }
    }
}

impl fmt::Display for WindowMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowingPolicy {
    pub window_ms: u64,
    pub overlap_ms: u64,
    pub resample_period_ms: u64,
    /// Zero-order-hold resample continuous traces before aggregation. When
    /// off, MEAN and GRADIENT run on the logged samples directly.
    pub resample: bool,
}

impl Default for WindowingPolicy {
    fn default() -> Self {
        WindowingPolicy {
            window_ms: 3000,
            overlap_ms: 0,
            resample_period_ms: 250,
            resample: true,
        }
    }
}

impl WindowingPolicy {
    pub fn with_window_ms(window_ms: u64) -> Self {
        WindowingPolicy {
            window_ms,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        if self.window_ms == 0 {
            return Err(SignalError::InvalidPolicy("window length must be positive".into()));
        }
        if self.overlap_ms != 0 {
            return Err(SignalError::InvalidPolicy("overlapping windows are not supported".into()));
        }
        if self.resample_period_ms == 0 || !self.window_ms.is_multiple_of(self.resample_period_ms) {
            return Err(SignalError::InvalidPolicy(format!(
                "resample period {} ms must divide the window length {} ms",
                self.resample_period_ms, self.window_ms
            )));
        }
        Ok(())
    }

    pub fn window_count(&self, video_duration: u64) -> usize {
        (video_duration / self.window_ms) as usize
    }
}

/// One trace reduced to a value per window. `None` marks a missing window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSeries {
    pub trace_id: String,
    pub video_id: String,
    pub tool: ToolKind,
    pub metric: WindowMetric,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalised {
    pub trace: Trace,
    /// All samples were equal and have been mapped to 0.5.
    pub constant: bool,
}

pub fn min_max_normalise(trace: &Trace) -> Result<Normalised, SignalError> {
    if !trace.tool.is_continuous() {
        return Err(SignalError::IncompatibleMetric {
            metric: WindowMetric::Mean,
            tool: trace.tool,
        });
    }
    if trace.samples.is_empty() {
        return Err(SignalError::EmptyTrace(trace.trace_id()));
    }
    let (min, max) = trace
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let constant = max == min;
    let range = max - min;
    let mut out = trace.clone();
    for s in &mut out.samples {
        s.value = if constant { 0.5 } else { (s.value - min) / range };
    }
    Ok(Normalised { trace: out, constant })
}

/// Zero-order-hold sampling on `[0, video_duration)` every
/// `resample_period_ms`.
pub fn resample(trace: &Trace, policy: &WindowingPolicy) -> Result<Trace, SignalError> {
    policy.validate()?;
    if !trace.tool.is_continuous() {
        return Err(SignalError::IncompatibleMetric {
            metric: WindowMetric::Mean,
            tool: trace.tool,
        });
    }
    if trace.samples.is_empty() {
        return Err(SignalError::EmptyTrace(trace.trace_id()));
    }
    let samples = (0..trace.video_duration)
        .step_by(policy.resample_period_ms as usize)
        .map(|t| TraceSample::new(t, trace.value_at(t).expect("non-empty")))
        .collect();
    Ok(Trace {
        samples,
        ..trace.clone()
    })
}

/// Aggregates samples into `floor(video_duration / window_ms)` windows.
///
/// Windows starting at or after the viewed duration are missing. A trailing
/// partial window is dropped.
pub fn window(
    trace: &Trace,
    metric: WindowMetric,
    policy: &WindowingPolicy,
) -> Result<WindowedSeries, SignalError> {
    policy.validate()?;
    if !metric.compatible_with(trace.tool) {
        return Err(SignalError::IncompatibleMetric {
            metric,
            tool: trace.tool,
        });
    }
    let length = policy.window_ms;
    let count = policy.window_count(trace.video_duration);
    let span = count as u64 * length;
    let mut sums = vec![0.0f64; count];
    let mut counts = vec![0usize; count];
    // Means accumulate offsets from the window's first sample, so a constant
    // window averages to exactly that constant.
    let mut anchors = vec![0.0f64; count];

    match metric {
        WindowMetric::Sum => {
            for s in trace.samples.iter().filter(|s| s.video_time < span) {
                let w = (s.video_time / length) as usize;
                sums[w] += s.value;
                counts[w] += 1;
            }
        }
        WindowMetric::Mean => {
            for s in trace.samples.iter().filter(|s| s.video_time < span) {
                let w = (s.video_time / length) as usize;
                if counts[w] == 0 {
                    anchors[w] = s.value;
                }
                sums[w] += s.value - anchors[w];
                counts[w] += 1;
            }
        }
        WindowMetric::Gradient => {
            for pair in trace.samples.windows(2) {
                let right = pair[1];
                if right.video_time >= span {
                    continue;
                }
                let w = (right.video_time / length) as usize;
                sums[w] += right.value - pair[0].value;
                counts[w] += 1;
            }
        }
    }

    let values = (0..count)
        .map(|w| {
            if w as u64 * length >= trace.viewed_duration {
                return None;
            }
            match metric {
                WindowMetric::Sum => Some(sums[w]),
                _ if counts[w] == 0 => None,
                WindowMetric::Mean => Some(anchors[w] + sums[w] / counts[w] as f64),
                WindowMetric::Gradient => Some(sums[w] / counts[w] as f64),
            }
        })
        .collect();

    Ok(WindowedSeries {
        trace_id: trace.trace_id(),
        video_id: trace.video_id.clone(),
        tool: trace.tool,
        metric,
        values,
    })
}

/// Full per-trace preprocessing: normalise and resample continuous traces,
/// then window.
pub fn process(
    trace: &Trace,
    metric: WindowMetric,
    policy: &WindowingPolicy,
) -> Result<WindowedSeries, SignalError> {
    if !metric.compatible_with(trace.tool) {
        return Err(SignalError::IncompatibleMetric {
            metric,
            tool: trace.tool,
        });
    }
    if metric == WindowMetric::Sum {
        return window(trace, metric, policy);
    }
    let normalised = min_max_normalise(trace)?.trace;
    if policy.resample {
        window(&resample(&normalised, policy)?, metric, policy)
    } else {
        window(&normalised, metric, policy)
    }
}
