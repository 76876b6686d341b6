mod cache;
mod commands;
mod config;
mod manifest;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, Settings};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_PARTIAL: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or AU codes; nothing was computed.
    Usage(String),
    /// Unreadable or inconsistent inputs.
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

/// How a command that ran to completion went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Some requested items were skipped; the rest were written.
    Partial,
}

/// Write through a temporary sibling and rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

#[derive(Parser)]
#[command(
    name = "neurofacs",
    version,
    about = "Facial action unit intensity models: extract, train, detect, evaluate",
    after_help = "Exit codes: 0 success, 2 usage error, 3 data error, 4 partial failure (some items skipped)."
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// key=value configuration file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Fused-score activation threshold [default: 1]
    #[arg(long, global = true, value_name = "X")]
    threshold: Option<f64>,
    /// Truncated copies per training sequence [default: 5]
    #[arg(long, global = true, value_name = "N")]
    cuts: Option<usize>,
    /// Final reduced feature dimension [default: 6]
    #[arg(long = "reduced-dim", global = true, value_name = "N")]
    reduced_dim: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Track landmarks and compute Gabor features into the cache
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Cache directory [default: <manifest dir>/features]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model per AU
    TrainAu {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated AU codes, e.g. 1,4 or AU12
        #[arg(long, value_name = "LIST")]
        au: String,
        #[arg(long)]
        out: PathBuf,
        /// Feature cache [default: <manifest dir>/features]
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Score every sequence with the trained models
    Detect {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long, value_name = "LIST")]
        au: Option<String>,
        /// Directory for detections.tsv
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Recognition-rate report per face region
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
        models: Option<PathBuf>,
        /// detections.tsv from a previous detect run
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, value_name = "LIST")]
        au: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Train the expression tree on detected AU intensities
    TrainExpr {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, conflicts_with = "models", required_unless_present = "models")]
        detections: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Write the rules of an expression tree as text
    ExportRules {
        #[arg(long)]
        model: PathBuf,
        /// Rule file [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a synthetic dataset with manifests
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Dataset size
        #[arg(long, value_enum, default_value_t = commands::SynthScale::Full)]
        scale: commands::SynthScale,
        /// Also render this many sequences per expression into expr.tsv
        #[arg(long, default_value_t = 0)]
        expressions: usize,
    },
}

fn run(cli: Cli) -> Result<Status, CliError> {
    let g = &cli.global;
    let overrides = Overrides {
        seed: g.seed,
        threshold: g.threshold,
        cuts: g.cuts,
        reduced_dim: g.reduced_dim,
    };
    let settings = Settings::load(g.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Extract { manifest, out } => commands::extract(&manifest, out, &settings),
        Command::TrainAu {
            manifest,
            au,
            out,
            features,
        } => commands::train_au(&manifest, &au, &out, features, &settings),
        Command::Detect {
            manifest,
            models,
            au,
            out,
            features,
        } => commands::detect(&manifest, &models, au.as_deref(), out.as_deref(), features, &settings),
        Command::Eval {
            manifest,
            models,
            predictions,
            au,
            out,
            features,
        } => commands::eval(
            &manifest,
            models.as_deref(),
            predictions.as_deref(),
            au.as_deref(),
            &out,
            features,
            &settings,
        ),
        Command::TrainExpr {
            manifest,
            detections,
            models,
            out,
            features,
        } => commands::train_expr(&manifest, detections.as_deref(), models.as_deref(), &out, features, &settings),
        Command::ExportRules { model, out } => commands::export_rules(&model, out.as_deref()),
        Command::Synth {
            out,
            scale,
            expressions,
        } => commands::synth(&out, scale, expressions, g.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(EXIT_PARTIAL),
        Err(e) => {
            eprintln!("neurofacs: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Data(_) => EXIT_DATA,
            })
        }
    }
}
