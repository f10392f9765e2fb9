//! Command-line pipeline: `synth`, `train`, `detect`, `track`, `eval`.
//!
//! Every run writes a manifest next to its output (config echo, seed,
//! version, wall time). Exit codes: 0 success, 1 usage, 2 data error,
//! 3 internal error.

mod commands;
mod io;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flexpose::RunConfig;

#[derive(Parser)]
#[command(name = "flexpose", version, about = "Articulated-body pose estimation and tracking")]
struct Cli {
    /// Config file in the flat key=value format; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single-key config overrides, e.g. --set stage1_m=200 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Worker threads for frame-parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence: PNG frames plus annotations.json.
    Synth {
        /// Config file whose synth_* keys drive the generator.
        config_file: PathBuf,
        out_dir: PathBuf,
    },
    /// Train a model from an annotation file and background images.
    Train {
        /// Annotation JSON (frame directories resolved relative to it).
        data: PathBuf,
        /// Directory of background PNGs without the target.
        backgrounds: PathBuf,
        /// Output model path.
        model: PathBuf,
    },
    /// Per-frame M-best detection; records both stage scores.
    Detect {
        model: PathBuf,
        frames: PathBuf,
        out: PathBuf,
        /// Candidates to report per frame (default: stage2_m).
        #[arg(short, long)]
        m: Option<usize>,
        /// Frame filename glob.
        #[arg(long, default_value = "*.png")]
        pattern: String,
    },
    /// Optimal pose sequence over a frame directory.
    Track {
        model: PathBuf,
        frames: PathBuf,
        out: PathBuf,
        /// Temporal smoothness weight (default: config gamma).
        #[arg(long)]
        gamma: Option<f64>,
        /// Frame filename glob.
        #[arg(long, default_value = "*.png")]
        pattern: String,
        /// Directory for per-frame overlay PNGs.
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// PCK curves (detect output) or sequence PCK (track output) vs ground truth.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        /// Output CSV path.
        out: PathBuf,
        /// Correctness threshold fraction (default: config pck_beta).
        #[arg(long)]
        beta: Option<f64>,
        /// Candidate counts for the curve, comma separated.
        #[arg(long, default_value = "1,2,5,10,20,40,80")]
        ms: String,
        /// Which detection stage to evaluate (1 or 2).
        #[arg(long, default_value_t = 2)]
        stage: u8,
    },
}

/// Failure categories mapped to exit codes.
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| CliError::Data(e.to_string()))?,
        None => RunConfig::default(),
    };
    for pair in &cli.sets {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(CliError::Usage(format!("--set expects KEY=VALUE, got '{pair}'")));
        };
        cfg.set(key.trim(), value).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    let started = std::time::Instant::now();
    match &cli.command {
        Command::Synth { config_file, out_dir } => {
            // The positional config file is the source of the synth keys.
            let mut file_cfg =
                RunConfig::load(config_file).map_err(|e| CliError::Data(e.to_string()))?;
            for pair in &cli.sets {
                if let Some((key, value)) = pair.split_once('=') {
                    file_cfg.set(key.trim(), value).map_err(|e| CliError::Usage(e.to_string()))?;
                }
            }
            commands::synth(&file_cfg, out_dir, started)
        }
        Command::Train { data, backgrounds, model } => {
            commands::train(&cfg, data, backgrounds, model, started)
        }
        Command::Detect { model, frames, out, m, pattern } => {
            commands::detect(&cfg, model, frames, out, *m, pattern, started)
        }
        Command::Track { model, frames, out, gamma, pattern, overlay } => {
            commands::track(&cfg, model, frames, out, *gamma, pattern, overlay.as_deref(), started)
        }
        Command::Eval { pred, gt, out, beta, ms, stage } => {
            commands::eval(&cfg, pred, gt, out, *beta, ms, *stage, started)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Let clap print its rich help/usage text, then exit 1 on errors
            // (0 for --help / --version).
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
