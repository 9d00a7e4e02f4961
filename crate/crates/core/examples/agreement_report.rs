//! Runs the analysis pipeline on an export file, like the `analyze`
//! command, and prints both output formats.
//!
//! cargo run --example agreement_report -- path/to/export.csv [window seconds]

use affectrace::analysis::{self, AnalysisOptions};
use affectrace::simulate::{simulate_study, AnnotatorModel, StudyDesign};
use affectrace::store::write_csv;

fn main() {
    let mut args = std::env::args().skip(1);
    let input = match args.next() {
        Some(path) => std::fs::read(path).expect("readable export"),
        None => write_csv(&simulate_study(&StudyDesign::three_by_three(AnnotatorModel::Shared { noise: 0.9 }, 3))),
    };
    let window_seconds = args.next().and_then(|s| s.parse().ok()).unwrap_or(3.0);
    let options = AnalysisOptions {
        window_seconds,
        ..AnalysisOptions::default()
    };
    match analysis::run(&input, &options) {
        Ok(report) => {
            println!("{}", report.to_text());
            print!("{}", report.to_machine());
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
