//! The `node-pipeline` binary: argument parsing, dispatch, exit codes.
//!
//! Exit codes are a stable contract: 0 success, 2 bad invocation or bad
//! input data, 3 missing/incompatible prior-stage artifacts. Diagnostics go
//! to stderr as JSON lines; artifacts go only to `--out`.

use std::fs;
use std::path::PathBuf;
use std::process::exit;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use cli_pipeline::config::PipelineConfig;
use cli_pipeline::manifest::Split;
use cli_pipeline::{commands, io_error, logging, CliError, Context};

#[derive(Parser)]
#[command(
    name = "node-pipeline",
    version,
    about = "Raw-domain denoising pipeline: calibrate, synthesize, pretrain, finetune, denoise, evaluate"
)]
struct Cli {
    /// Pipeline configuration JSON; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Global seed; overrides the config file's seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory; every artifact lands here (required).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for parallel sections; defaults to all cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the sensor noise model from a burst of aligned frames.
    Calibrate {
        /// Directory holding the burst frames (*.pgm with JSON sidecars).
        #[arg(long, value_name = "DIR")]
        burst_dir: PathBuf,
    },
    /// Corrupt clean images into the gp/defect/mixed training datasets.
    Synthesize {
        /// Directory of clean scenes (*.pgm with JSON sidecars).
        #[arg(long, value_name = "DIR")]
        clean_dir: PathBuf,
        /// Calibrated noise model JSON, as written by `calibrate`.
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
    },
    /// Train both noise branches on their single-noise datasets.
    Pretrain {
        /// Dataset manifest written by `synthesize`.
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
    },
    /// Train the assembled model end to end on mixed noise.
    Finetune {
        /// Dataset manifest written by `synthesize`.
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Pretrained checkpoint, as written by `pretrain`.
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
    },
    /// Run a trained model over a dataset split.
    Denoise {
        /// Dataset manifest written by `synthesize`.
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Trained checkpoint, as written by `finetune`.
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Which split to process.
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Restrict to one dataset variant (gp, defect, mixed).
        #[arg(long, value_name = "NAME")]
        variant: Option<String>,
    },
    /// Score images against their clean references.
    Evaluate {
        /// Dataset manifest written by `synthesize`.
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Directory of candidate images named `<entry id>.pgm`; the
        /// manifest's own noisy images are scored when omitted.
        #[arg(long, value_name = "DIR")]
        images_dir: Option<PathBuf>,
        /// Which split to score.
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Restrict to one dataset variant (gp, defect, mixed).
        #[arg(long, value_name = "NAME")]
        variant: Option<String>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn to_filter(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads {n}: {e}")))?;
    }
    let config = match &cli.config {
        Some(path) => PipelineConfig::from_path(path)?,
        None => PipelineConfig::default(),
    };
    let seed = cli.seed.unwrap_or(config.seed);
    let out = cli.out.ok_or_else(|| CliError::Usage("--out is required".into()))?;
    fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
    let ctx = Context { config, seed, out };

    match &cli.command {
        Command::Calibrate { burst_dir } => commands::calibrate::run(&ctx, burst_dir),
        Command::Synthesize { clean_dir, model } => {
            commands::synthesize::run(&ctx, clean_dir, model)
        }
        Command::Pretrain { manifest } => commands::pretrain::run(&ctx, manifest),
        Command::Finetune { manifest, model } => commands::finetune::run(&ctx, manifest, model),
        Command::Denoise { manifest, model, split, variant } => commands::denoise::run(
            &ctx,
            manifest,
            model,
            split.to_filter(),
            variant.as_deref(),
        ),
        Command::Evaluate { manifest, images_dir, split, variant } => commands::evaluate::run(
            &ctx,
            manifest,
            images_dir.as_deref(),
            split.to_filter(),
            variant.as_deref(),
        ),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            exit(code);
        }
    };
    if let Err(err) = run(cli) {
        let code = err.exit_code();
        logging::event("error", json!({ "detail": err.to_string(), "code": code }));
        exit(code);
    }
}
