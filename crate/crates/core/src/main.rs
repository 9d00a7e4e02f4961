use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use affectrace::analysis::{self, AnalysisError, AnalysisOptions};
use affectrace::service::{ProjectService, ServiceConfig, SystemClock};
use affectrace::store::Store;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(version, about = "Continuous affect annotation service and agreement analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Machine,
}

#[derive(Subcommand)]
enum Command {
    /// Agreement table from a project export.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        window_seconds: f64,
        #[arg(long, default_value_t = 3)]
        min_samples: usize,
        #[arg(long, default_value_t = 60.0)]
        min_view_seconds: f64,
        #[arg(long)]
        ordinal_bins: Option<usize>,
        /// Window the logged samples without resampling.
        #[arg(long)]
        no_resample: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Journal file; in-memory when omitted.
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long, default_value = "http://localhost:8080")]
        base_url: String,
        #[arg(long)]
        media_root: Option<PathBuf>,
    },
}

fn analyze(input: PathBuf, options: AnalysisOptions, format: Format) -> Result<String, AnalysisError> {
    let bytes = std::fs::read(input)?;
    let report = analysis::run(&bytes, &options)?;
    Ok(match format {
        Format::Text => report.to_text(),
        Format::Machine => report.to_machine(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Analyze {
            input,
            window_seconds,
            min_samples,
            min_view_seconds,
            ordinal_bins,
            no_resample,
            format,
        } => {
            let options = AnalysisOptions {
                window_seconds,
                min_samples,
                min_view_seconds,
                ordinal_bins,
                resample: !no_resample,
            };
            match analyze(input, options, format) {
                Ok(out) => {
                    print!("{out}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Serve {
            bind,
            journal,
            base_url,
            media_root,
        } => {
            tracing_subscriber::fmt().init();
            let store = match journal {
                Some(path) => match Store::open(&path) {
                    Ok(s) => s,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(3);
                    }
                },
                None => Store::in_memory(),
            };
            let config = ServiceConfig {
                base_url,
                media_root,
                ..ServiceConfig::default()
            };
            let service = Arc::new(ProjectService::new(store, config, Arc::new(SystemClock)));
            let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
            match runtime.block_on(affectrace::http::serve(bind, service)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            }
        }
    }
}
