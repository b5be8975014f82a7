//! `facefatigue`: landmarks, training, scoring and cohort analysis.

mod commands;
mod config;
mod error;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::FileConfig;

#[derive(Parser)]
#[command(
    name = "facefatigue",
    version,
    about = "Facial-cue fatigue scoring and cohort analysis"
)]
struct Cli {
    /// Settings file with `key = value` lines; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-face and per-cue work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect faces and landmarks, writing canonical landmark JSON-Lines.
    Landmarks(LandmarksArgs),
    /// Tune and fit the eight cue regressors from rated faces.
    Train(TrainArgs),
    /// Score the faces of one image.
    Predict(PredictArgs),
    /// Score every face of a landmark file.
    ScoreBatch(ScoreBatchArgs),
    /// Fit the two-component mixture and fatigue threshold to scores.
    Calibrate(CalibrateArgs),
    /// Fatigue proportions and pairwise tests across demographic groups.
    Analyze(AnalyzeArgs),
    /// Cross-validate a trained model's configurations on rated faces.
    Evaluate(EvaluateArgs),
    /// Serve a local stand-in for the face-analysis service.
    MockProvider(MockArgs),
    /// Write a rated synthetic corpus with planted cue signals.
    Synthesize(SynthesizeArgs),
}

#[derive(Args)]
pub struct LandmarksArgs {
    /// Directory of input images (png, jpg).
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Manifest whose `image` entries select the images to process.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// facepp, canonical, rect_percent, or file to re-validate an existing
    /// landmark file given with --from.
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Landmark file read by the `file` provider.
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RatedInputs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub inputs: RatedInputs,
    /// Output directory for model.json, training_report.json and rejects.jsonl.
    #[arg(long)]
    pub out: PathBuf,
    /// Total objective evaluations per cue.
    #[arg(long)]
    pub bo_iters: Option<usize>,
    /// Random evaluations before the surrogate takes over.
    #[arg(long)]
    pub bo_init: Option<usize>,
    /// Also save every cropped region as PNG here.
    #[arg(long)]
    pub dump_rois: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub landmarks: PathBuf,
    /// Score only this face; by default every face on the image.
    #[arg(long)]
    pub face_id: Option<String>,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dump_rois: Option<PathBuf>,
}

#[derive(Args)]
pub struct ScoreBatchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dump_rois: Option<PathBuf>,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub calib: PathBuf,
    /// Comma-separated subset of age, gender, race.
    #[arg(long)]
    pub axes: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Output directory for report.json and histogram.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub inputs: RatedInputs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct MockArgs {
    /// Address to listen on; port 0 picks a free port.
    #[arg(long, default_value = "127.0.0.1:0")]
    pub bind: String,
    /// JSON response body for every authorized request.
    #[arg(long)]
    pub fixture: Option<PathBuf>,
    #[arg(long, default_value = "mock-key")]
    pub api_key: String,
    #[arg(long, default_value = "mock-secret")]
    pub api_secret: String,
    /// Answer this many initial requests with HTTP 503.
    #[arg(long, default_value_t = 0)]
    pub transient_failures: usize,
}

#[derive(Args)]
pub struct SynthesizeArgs {
    #[arg(long, default_value_t = 60)]
    pub faces: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Receives images/, landmarks.jsonl and manifest.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = FileConfig::load(cli.config.as_deref()).and_then(|cfg| {
        let jobs = cfg.get(cli.jobs, "jobs")?;
        if jobs == Some(0) {
            return Err(error::CliError::input("--jobs must be at least 1"));
        }
        if let Some(n) = jobs {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| error::CliError::input(format!("thread pool: {e}")))?;
        }
        let jobs = jobs.unwrap_or_else(rayon::current_num_threads);
        match cli.command {
            Command::Landmarks(a) => commands::landmarks(&a, &cfg, jobs),
            Command::Train(a) => commands::train(&a, &cfg),
            Command::Predict(a) => commands::predict(&a),
            Command::ScoreBatch(a) => commands::score_batch(&a),
            Command::Calibrate(a) => commands::calibrate(&a),
            Command::Analyze(a) => commands::analyze(&a, &cfg),
            Command::Evaluate(a) => commands::evaluate(&a, &cfg),
            Command::MockProvider(a) => commands::mock_provider(&a),
            Command::Synthesize(a) => commands::synthesize(&a, &cfg),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind.exit_code()
        }
    }
}
