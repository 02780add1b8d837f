//! `aoi`: dataset generation, inspection, classifier training and evaluation.

mod commands;
mod config;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::CliConfig;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    /// Bad flags, config or missing inputs.
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    /// The pipeline itself failed.
    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<aoi_core::Error> for CliError {
    fn from(e: aoi_core::Error) -> Self {
        use aoi_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::Parse { .. } | E::ShapeMismatch { .. } | E::Weights(_) => {
                CliError::usage(e.to_string())
            }
            _ => CliError::runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "aoi", version, about = "Reference-comparison PCB defect inspection")]
pub struct Cli {
    /// TOML configuration file; command-line flags override its values [default: none, built-in defaults]
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads, 0 for one per core [default: 0]
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Print the resolved configuration as TOML and exit without running
    #[arg(long, global = true)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic defect dataset tree
    Gen(GenArgs),
    /// Inspect one test image against its template
    Inspect(InspectArgs),
    /// Train the defect classifier on crops from a dataset
    Train(TrainArgs),
    /// Score saved weights on the held-out crops of a dataset
    Eval(EvalArgs),
    /// Run detection (and classification) over a whole dataset
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output directory; must not exist or be empty unless --overwrite
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Comma-separated class names, or `all` [default: all]
    #[arg(long, value_name = "LIST")]
    pub classes: Option<String>,
    /// Boards per class [default: 10]
    #[arg(long, value_name = "N")]
    pub boards: Option<usize>,
    /// Number of defect-free templates [default: 10]
    #[arg(long, value_name = "N")]
    pub templates: Option<usize>,
    /// Master seed [default: 2019]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lower bound of rotation angles, degrees [default: 0]
    #[arg(long, allow_hyphen_values = true, value_name = "DEG")]
    pub angle_min: Option<f64>,
    /// Upper bound (exclusive) of rotation angles, degrees [default: 360]
    #[arg(long, allow_hyphen_values = true, value_name = "DEG")]
    pub angle_max: Option<f64>,
    /// Add Gaussian noise with this sigma to every board [default: no noise]
    #[arg(long, value_name = "SIGMA")]
    pub noise: Option<f64>,
    /// Generate boards one at a time [default: parallel]
    #[arg(long)]
    pub serial: bool,
    /// Replace an existing output directory
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Adaptive threshold neighbourhood, odd [default: 51]
    #[arg(long, value_name = "PX")]
    pub blocksize: Option<usize>,
    /// Offset added to the local mean [default: 10]
    #[arg(long, allow_hyphen_values = true)]
    pub offset_c: Option<f64>,
    /// Smallest component area kept, px [default: 50]
    #[arg(long, value_name = "PX")]
    pub min_area: Option<u64>,
    /// NMS overlap threshold [default: 0.3]
    #[arg(long, value_name = "IOU")]
    pub nms_iou: Option<f64>,
    /// Context added around each box before classification, px [default: 5]
    #[arg(long, value_name = "PX")]
    pub crop_pad: Option<u32>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Defect-free reference image (PNG)
    #[arg(long, value_name = "PNG")]
    pub template: Option<PathBuf>,
    /// Image to inspect (PNG)
    #[arg(long, value_name = "PNG")]
    pub test: Option<PathBuf>,
    /// Classifier weights; boxes stay unclassified without them [default: none]
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Directory for report.json and overlay.png [default: print only]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset root written by `gen`
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Where to write the trained weights
    #[arg(long, value_name = "FILE")]
    pub out_weights: Option<PathBuf>,
    /// Per-epoch log file [default: <out-weights>.log]
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,
    /// Training epochs [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial learning rate [default: 0.01]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size [default: 8]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Shuffling seed [default: 32417]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset root written by `gen`
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Trained weights
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Write the evaluation as JSON here [default: print only]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset root written by `gen`
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Classifier weights; detection only without them [default: none]
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Inspect the straight images instead of the rotated copies
    #[arg(long)]
    pub straight: bool,
    /// IoU for matching detections to ground truth [default: 0.33]
    #[arg(long, value_name = "IOU")]
    pub match_iou: Option<f64>,
    /// Write the full result as JSON here [default: print only]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::from_file(p)?,
        None => CliConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(cmd) = &cli.command {
        commands::apply_flags(cmd, &mut cfg)?;
    }
    cfg.validate()?;
    if cli.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(cmd) = &cli.command else {
        return Err(CliError::usage("no subcommand given; see `aoi --help`"));
    };
    if cfg.threads > 0 {
        // fails only if a pool already exists, which keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    match cmd {
        Command::Gen(a) => commands::gen(a, &cfg),
        Command::Inspect(a) => commands::inspect(a, &cfg),
        Command::Train(a) => commands::train(a, &cfg),
        Command::Eval(a) => commands::eval(a, &cfg),
        Command::Bench(a) => commands::bench(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
