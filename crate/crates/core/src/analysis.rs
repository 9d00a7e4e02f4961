//! Export file to agreement table: import, clean, normalise, resample,
//! window, and Krippendorff's alpha per (tool, processing, video) cell.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::ToolKind;
use crate::reliability::{agreement_cell, AlphaResult, ReliabilityError};
use crate::signal::{self, CleaningPolicy, RemovedTrace, SignalError, WindowMetric, WindowedSeries, WindowingPolicy};
use crate::store::{import_csv, ImportError};

/// Rows of the agreement table, in display order.
pub const REPORT_ROWS: [(ToolKind, WindowMetric); 5] = [
    (ToolKind::RankTrace, WindowMetric::Gradient),
    (ToolKind::RankTrace, WindowMetric::Mean),
    (ToolKind::GTrace, WindowMetric::Gradient),
    (ToolKind::GTrace, WindowMetric::Mean),
    (ToolKind::BTrace, WindowMetric::Sum),
];

const RESAMPLE_PERIOD_MS: u64 = 250;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("reading input: {0}")]
    Io(#[from] io::Error),
    #[error("import: {0}")]
    Import(#[from] ImportError),
    #[error("signal processing: {0}")]
    Signal(#[from] SignalError),
    #[error("reliability: {0}")]
    Reliability(#[from] ReliabilityError),
}

impl AnalysisError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            AnalysisError::InvalidOption(_) => 2,
            AnalysisError::Io(_) => 3,
            AnalysisError::Import(_) => 4,
            AnalysisError::Signal(_) => 5,
            AnalysisError::Reliability(_) => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub window_seconds: f64,
    pub min_samples: usize,
    pub min_view_seconds: f64,
    /// Quantise ordinal metrics into this many equal-width bins.
    pub ordinal_bins: Option<usize>,
    /// Zero-order-hold resample continuous traces before windowing.
    pub resample: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            window_seconds: 3.0,
            min_samples: 3,
            min_view_seconds: 60.0,
            ordinal_bins: None,
            resample: true,
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl AnalysisOptions {
    pub fn windowing(&self) -> Result<WindowingPolicy, AnalysisError> {
        let window_ms = (self.window_seconds * 1000.0).round();
        if !window_ms.is_finite() || window_ms < 1.0 {
            return Err(AnalysisError::InvalidOption(format!(
                "window length {} s is not positive",
                self.window_seconds
            )));
        }
        let window_ms = window_ms as u64;
        let policy = WindowingPolicy {
            window_ms,
            overlap_ms: 0,
            resample_period_ms: gcd(window_ms, RESAMPLE_PERIOD_MS),
            resample: self.resample,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn cleaning(&self) -> Result<CleaningPolicy, AnalysisError> {
        let min_view = (self.min_view_seconds * 1000.0).round();
        if self.min_samples == 0 || !min_view.is_finite() || min_view < 1.0 {
            return Err(AnalysisError::InvalidOption(
                "cleaning thresholds must be positive".into(),
            ));
        }
        Ok(CleaningPolicy {
            min_samples: self.min_samples,
            min_view_ms: min_view as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CellOutcome {
    Alpha(AlphaResult),
    /// Alpha could not be computed, e.g. fewer than two traces.
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub video_id: String,
    pub traces: usize,
    pub raters: usize,
    pub units: usize,
    pub outcome: CellOutcome,
}

impl ReportCell {
    pub fn alpha(&self) -> Option<f64> {
        match &self.outcome {
            CellOutcome::Alpha(r) => Some(r.alpha),
            CellOutcome::Unavailable(_) => None,
        }
    }

    /// Alpha as printed, four decimals.
    pub fn alpha_text(&self) -> String {
        self.alpha().map_or_else(|| "NA".to_string(), |a| format!("{a:.4}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub tool: ToolKind,
    pub metric: WindowMetric,
    pub cells: Vec<ReportCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub window_ms: u64,
    pub cleaning: CleaningPolicy,
    pub ordinal_bins: Option<usize>,
    pub imported_traces: usize,
    pub kept_traces: usize,
    pub removed: Vec<RemovedTrace>,
    pub videos: Vec<String>,
    pub rows: Vec<ReportRow>,
}

/// Runs the pipeline on the bytes of an export file.
pub fn run(input: &[u8], options: &AnalysisOptions) -> Result<Report, AnalysisError> {
    let windowing = options.windowing()?;
    let cleaning = options.cleaning()?;
    let log = import_csv(input)?;

    let videos: BTreeSet<String> = log.traces.iter().map(|t| t.base_video_id().to_string()).collect();
    let imported = log.traces.len();
    let base_ids: BTreeMap<String, String> = log
        .traces
        .iter()
        .map(|t| (t.trace.trace_id(), t.base_video_id().to_string()))
        .collect();
    let cleaned = signal::clean(log.traces.into_iter().map(|t| t.trace), &cleaning);

    let mut series: Vec<WindowedSeries> = Vec::new();
    for trace in &cleaned.kept {
        for &metric in WindowMetric::for_tool(trace.tool) {
            let mut s = signal::process(trace, metric, &windowing)?;
            s.video_id = base_ids[&s.trace_id].clone();
            series.push(s);
        }
    }

    let mut groups: BTreeMap<(ToolKind, WindowMetric, &str), Vec<&WindowedSeries>> = BTreeMap::new();
    for s in &series {
        groups.entry((s.tool, s.metric, s.video_id.as_str())).or_default().push(s);
    }

    let rows = REPORT_ROWS
        .iter()
        .map(|&(tool, metric)| {
            let cells = videos
                .iter()
                .map(|video| {
                    let members = groups.get(&(tool, metric, video.as_str())).cloned().unwrap_or_default();
                    let units = members.iter().map(|s| s.values.len()).max().unwrap_or(0);
                    let (raters, outcome) =
                        match agreement_cell(video, tool, metric, &members, options.ordinal_bins) {
                            Ok(cell) => (cell.raters, CellOutcome::Alpha(cell.result)),
                            Err(e) => (members.len(), CellOutcome::Unavailable(e.to_string())),
                        };
                    ReportCell {
                        video_id: video.clone(),
                        traces: members.len(),
                        raters,
                        units,
                        outcome,
                    }
                })
                .collect();
            ReportRow { tool, metric, cells }
        })
        .collect();

    Ok(Report {
        window_ms: windowing.window_ms,
        cleaning,
        ordinal_bins: options.ordinal_bins,
        imported_traces: imported,
        kept_traces: cleaned.kept.len(),
        removed: cleaned.removed,
        videos: videos.into_iter().collect(),
        rows,
    })
}

impl Report {
    pub fn cell(&self, tool: ToolKind, metric: WindowMetric, video: &str) -> Option<&ReportCell> {
        self.rows
            .iter()
            .find(|r| r.tool == tool && r.metric == metric)?
            .cells
            .iter()
            .find(|c| c.video_id == video)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Krippendorff's alpha over {} ms windows",
            self.window_ms
        );
        let _ = writeln!(
            out,
            "traces: {} imported, {} kept, {} removed (min {} samples, min {} ms viewed)",
            self.imported_traces,
            self.kept_traces,
            self.removed.len(),
            self.cleaning.min_samples,
            self.cleaning.min_view_ms
        );
        if let Some(bins) = self.ordinal_bins {
            let _ = writeln!(out, "ordinal values quantised into {bins} bins");
        }
        out.push('\n');

        let cell_text = |c: &ReportCell| format!("{} ({}x{})", c.alpha_text(), c.raters, c.units);
        let mut widths: Vec<usize> = self.videos.iter().map(|v| v.chars().count()).collect();
        for row in &self.rows {
            for (w, c) in widths.iter_mut().zip(&row.cells) {
                *w = (*w).max(cell_text(c).chars().count());
            }
        }
        let _ = write!(out, "{:<10} {:<10}", "Tool", "Processing");
        for (v, w) in self.videos.iter().zip(&widths) {
            let _ = write!(out, "  {v:>w$}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<10} {:<10}", row.tool.display_name(), row.metric.symbol());
            for (c, w) in row.cells.iter().zip(&widths) {
                let _ = write!(out, "  {:>w$}", cell_text(c));
            }
            out.push('\n');
        }

        if !self.removed.is_empty() {
            out.push_str("\nremoved traces:\n");
            for r in &self.removed {
                let reasons: Vec<String> = r.reasons.iter().map(|x| x.to_string()).collect();
                let _ = writeln!(out, "  {} {}", r.trace_id, reasons.join("+"));
            }
        }
        out
    }

    /// Flat CSV keyed by (tool, processing, video).
    pub fn to_machine(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(["tool", "processing", "video", "alpha", "raters", "units", "traces"])
            .expect("in-memory");
        for row in &self.rows {
            for c in &row.cells {
                writer
                    .write_record([
                        row.tool.as_str(),
                        row.metric.as_str(),
                        &c.video_id,
                        &c.alpha_text(),
                        &c.raters.to_string(),
                        &c.units.to_string(),
                        &c.traces.to_string(),
                    ])
                    .expect("in-memory");
            }
        }
        String::from_utf8(writer.into_inner().expect("in-memory")).expect("utf-8")
    }
}
