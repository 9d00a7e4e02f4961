//! Continuous affect annotation of videos: keyboard-driven trace capture for
//! RankTrace, GTrace and BTrace, a crowdsourcing service that collects the
//! logs, and an analysis pipeline that measures inter-rater agreement with
//! Krippendorff's alpha over equal-length time windows.
//!
//! | module | what it does |
//! |---|---|
//! | [`annotation`] | traces, input events, deterministic replay of the three tools |
//! | [`signal`] | cleaning, min-max normalisation, resampling, windowing |
//! | [`reliability`] | coincidence matrices and Krippendorff's alpha |
//! | [`service`] | accounts, projects, sessions, log ingestion |
//! | [`http`] | JSON API over [`service`] |
//! | [`store`] | journalled storage and the CSV export format |
//! | [`analysis`] | export file to agreement table |
//! | [`simulate`] | synthetic annotators for demos and tests |
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod analysis;
pub mod annotation;
pub mod http;
pub mod reliability;
pub mod service;
pub mod signal;
pub mod simulate;
pub mod store;

pub use annotation::{
    completion_status, replay, validate_client_trace, CursorDynamicsConfig, InputEvent, InputEventKind,
    ToolKind, Trace, TraceSample,
};
pub use reliability::{krippendorff_alpha, AlphaResult, MeasurementLevel, ReliabilityMatrix};
pub use service::{ProjectConfig, ProjectService, ServiceConfig};
pub use signal::{CleaningPolicy, WindowMetric, WindowedSeries, WindowingPolicy};
