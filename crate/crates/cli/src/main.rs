mod commands;
mod config;
mod error;
mod inputs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult, ExitKind};

/// Training-data synthesis, resampling, post-processing and evaluation
/// for whole-brain segmentation.
#[derive(Debug, Parser)]
#[command(name = "brainsynth", version)]
pub struct Cli {
    /// Pipeline configuration (JSON or TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; overrides the config file and BRAINSYNTH_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// -v info, -vv debug, -vvv trace.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VolumeKind {
    Image,
    Labels,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add the extra-cerebral label and skull-strip the matching image.
    PrepLabels(PrepArgs),
    /// Synthesize (image, target) training pairs from label maps.
    Generate(GenerateArgs),
    /// Resample an image or label map to a target resolution.
    Resample(ResampleArgs),
    /// Average probability stacks and take the per-voxel argmax.
    Ensemble(EnsembleArgs),
    /// Apply a largest-component policy to a label map.
    Postproc(PostprocArgs),
    /// Choose a largest-component policy from validation predictions.
    SelectPolicy(SelectPolicyArgs),
    /// Per-label Dice and surface distance with aggregate summaries.
    Evaluate(EvaluateArgs),
    /// ROI volumes, TIV normalization and group tests.
    Volumetry(VolumetryArgs),
    /// Seeded k-fold cross-validation split.
    SplitFolds(SplitFoldsArgs),
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    /// Label map.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Intensity image to skull-strip.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub out_labels: PathBuf,
    #[arg(long, requires = "image")]
    pub out_image: Option<PathBuf>,
    /// Dilation radius in voxels; chosen from the voxel size when omitted.
    #[arg(long)]
    pub radius: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Label map or directory of label maps.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub n_per_subject: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write imagesTr/ and labelsTr/ in the training layout.
    #[arg(long)]
    pub export_train: bool,
}

#[derive(Debug, Args)]
pub struct ResampleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Isotropic target voxel size (mm); defaults to the config value.
    #[arg(long)]
    pub target_res: Option<f64>,
    #[arg(long, value_enum)]
    pub kind: VolumeKind,
    /// Reorient to this axis code (e.g. LIA) before resampling.
    #[arg(long)]
    pub orient: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Directory of 4D probability stacks, or one stack per flag.
    #[arg(long, required = true, num_args = 1..)]
    pub probs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PostprocArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// JSON list of enabled label indices.
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectPolicyArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// `default` or a comma-separated list of label indices.
    #[arg(long, default_value = "default")]
    pub labels: String,
    /// Per-record CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON; defaults to `<out stem>_summary.json`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VolumetryArgs {
    #[arg(long)]
    pub labels_dir: PathBuf,
    /// CSV with columns subject,group (exactly two groups).
    #[arg(long)]
    pub groups: PathBuf,
    /// CSV with columns subject,tiv_mm3.
    #[arg(long)]
    pub tiv: PathBuf,
    /// Comma-separated ROI label indices.
    #[arg(long)]
    pub rois: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Number of methods compared; the Bonferroni count is ROIs times methods.
    #[arg(long, default_value_t = 1)]
    pub n_methods: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitFoldsArgs {
    /// Directory of subject files, or a text file with one subject per line.
    #[arg(long)]
    pub subjects: PathBuf,
    /// Fold count; defaults to the config value.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

const THREADS_ENV: &str = "BRAINSYNTH_THREADS";

fn effective_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n = v
            .parse()
            .map_err(|_| CliError::usage(format!("{THREADS_ENV}={v} is not a thread count")))?;
        cfg.threads = Some(n);
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = effective_config(&cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError {
                kind: ExitKind::Internal,
                source: e.into(),
            })?;
    }
    log::debug!("config hash {}", cfg.hash());
    match &cli.command {
        Command::PrepLabels(a) => commands::prep_labels(&cfg, a),
        Command::Generate(a) => commands::generate(&cfg, a),
        Command::Resample(a) => commands::resample(&cfg, a),
        Command::Ensemble(a) => commands::ensemble(&cfg, a),
        Command::Postproc(a) => commands::postproc(&cfg, a),
        Command::SelectPolicy(a) => commands::select_policy(&cfg, a),
        Command::Evaluate(a) => commands::evaluate(&cfg, a),
        Command::Volumetry(a) => commands::volumetry(&cfg, a),
        Command::SplitFolds(a) => commands::split_folds(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(ExitKind::Usage as u8),
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind as u8)
        }
        Err(_) => ExitCode::from(ExitKind::Internal as u8),
    }
}
