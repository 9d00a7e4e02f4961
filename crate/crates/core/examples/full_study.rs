//! Simulates a three-video, three-tool study, writes the export file and
//! prints the agreement table the `analyze` command would print for it.
//!
//! cargo run --example full_study -- [shared|identical|independent] [seed]

use affectrace::analysis::{self, AnalysisOptions};
use affectrace::simulate::{simulate_study, AnnotatorModel, StudyDesign};
use affectrace::store::write_csv;

fn main() {
    let mut args = std::env::args().skip(1);
    let model = match args.next().as_deref() {
        Some("identical") => AnnotatorModel::Identical,
        Some("independent") => AnnotatorModel::Independent,
        _ => AnnotatorModel::Shared { noise: 0.6 },
    };
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let mut design = StudyDesign::three_by_three(model, seed);
    // A few participants who gave up early, to show cleaning at work.
    design.cells[0].short_views = 2;
    design.cells[4].short_views = 1;

    let records = simulate_study(&design);
    let csv = write_csv(&records);
    let path = std::env::temp_dir().join(format!("affectrace-study-{seed}.csv"));
    std::fs::write(&path, &csv).expect("write export");
    println!("{} log rows written to {}\n", records.len(), path.display());

    let report = analysis::run(&csv, &AnalysisOptions::default()).expect("analysis");
    print!("{}", report.to_text());
}
