use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use veilkit_core::{NoiseMode, Reassembly};

#[derive(Debug, Parser)]
#[command(
    name = "veilkit",
    version,
    about = "Selective, motion-consistent privacy obfuscation for video"
)]
pub struct Cli {
    /// key = value file supplying defaults for any long flag; flags on the
    /// command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Per-stage timing on stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replace template-salient regions of a clip with motion-consistent noise.
    Obfuscate(ObfuscateArgs),
    /// Per-frame saliency maps, per-template averages and their similarity.
    Saliency(SaliencyArgs),
    /// Noise sequence for a clip.
    Noise(NoiseArgs),
    /// Full-frame baseline obfuscations.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Build or inspect a template library.
    #[command(subcommand)]
    Template(TemplateCommand),
    /// Action/privacy trade-off scores, rankings and template selection.
    Eval(EvalArgs),
    /// Write a synthetic clip with known saliency.
    Synth(SynthArgs),
    /// Per-channel dataset mean and standard deviation.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Warp,
    Composed,
    Iid,
}

impl From<ModeArg> for NoiseMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Warp => NoiseMode::WarpIterative,
            ModeArg::Composed => NoiseMode::WarpComposed,
            ModeArg::Iid => NoiseMode::Iid,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReassemblyArg {
    Nearest,
    Bilinear,
}

impl From<ReassemblyArg> for Reassembly {
    fn from(r: ReassemblyArg) -> Self {
        match r {
            ReassemblyArg::Nearest => Reassembly::Nearest,
            ReassemblyArg::Bilinear => Reassembly::Bilinear,
        }
    }
}

#[derive(Debug, Args)]
pub struct ObfuscateArgs {
    /// Clip manifest (JSON).
    pub manifest: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub library: PathBuf,
    /// Comma-separated template names.
    #[arg(long, required = true, value_delimiter = ',', value_name = "NAMES")]
    pub select: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "warp")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "nearest")]
    pub reassembly: ReassemblyArg,
    /// Saliency multiplier, clamped back into [0, 1].
    #[arg(long, default_value_t = 1.0)]
    pub gain: f32,
    /// Score every template descriptor as its own template.
    #[arg(long)]
    pub flatten: bool,
    /// Also write per-frame saliency maps.
    #[arg(long)]
    pub emit_saliency: bool,
    /// Also write the noise frames.
    #[arg(long)]
    pub emit_noise: bool,
    /// Reuse saliency and noise stages across runs.
    #[arg(long, value_name = "DIR")]
    pub cache: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    pub manifest: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub library: PathBuf,
    #[arg(long, required = true, value_delimiter = ',', value_name = "NAMES")]
    pub select: Vec<String>,
    #[arg(long, value_enum, default_value = "nearest")]
    pub reassembly: ReassemblyArg,
    #[arg(long)]
    pub flatten: bool,
    /// Clip-average map for each selected template on its own.
    #[arg(long)]
    pub per_template: bool,
    /// Pairwise L1 distances between per-template averages (implies
    /// --per-template).
    #[arg(long)]
    pub similarity: bool,
    /// Divide similarity sums by the pixel count.
    #[arg(long)]
    pub per_pixel: bool,
    /// Grayscale PNG previews next to the TNSR maps.
    #[arg(long)]
    pub png: bool,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "warp")]
    pub mode: ModeArg,
    #[arg(long)]
    pub png: bool,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineCommon {
    pub manifest: PathBuf,
    /// Resample frames to SIDE×SIDE first.
    #[arg(long, value_name = "SIDE")]
    pub resize: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum BaselineCommand {
    /// Block-average pixelation.
    Pixelate {
        #[command(flatten)]
        common: BaselineCommon,
        #[arg(long)]
        block: usize,
    },
    /// Separable Gaussian blur.
    Blur {
        #[command(flatten)]
        common: BaselineCommon,
        #[arg(long, default_value_t = 13)]
        kappa: usize,
        #[arg(long, default_value_t = 10.0)]
        sigma: f32,
    },
    /// Fill masked pixels with their per-channel mean.
    Mask {
        #[command(flatten)]
        common: BaselineCommon,
        /// Directory of per-frame masks, in name order; defaults to the
        /// manifest's mask_paths.
        #[arg(long, value_name = "DIR")]
        masks: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum TemplateCommand {
    /// Add a template made of descriptors picked from one frame's grid.
    Build {
        #[arg(long, value_name = "DIR")]
        library: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long)]
        manifest: PathBuf,
        /// 0-based frame index.
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Patch coordinates as row,col pairs separated by ';'.
        #[arg(long, value_name = "R,C;R,C")]
        patches: String,
        /// Overwrite an existing template of the same name.
        #[arg(long)]
        replace: bool,
    },
    /// List templates in a library.
    List {
        #[arg(long, value_name = "DIR")]
        library: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with method, dataset, action_acc, privacy_acc columns.
    #[arg(long, value_name = "CSV")]
    pub results: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// start:stop:step lambda sweep, written as long-form CSV.
    #[arg(long, value_name = "START:STOP:STEP")]
    pub sweep: Option<String>,
    /// Single-template results (template, dataset, action_acc, privacy_acc).
    #[arg(long, value_name = "CSV")]
    pub templates: Option<PathBuf>,
    /// Number of templates to pick from --templates.
    #[arg(long, value_name = "K")]
    pub select_k: Option<usize>,
    /// Restrict to one dataset.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Reference selection to compare the picked templates against.
    #[arg(long, value_delimiter = ',', value_name = "NAMES")]
    pub expect: Option<Vec<String>>,
    /// Write results here instead of stdout.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "JSON")]
    pub spec: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Clip manifest whose frames to measure.
    #[arg(required_unless_present = "frames", conflicts_with = "frames")]
    pub manifest: Option<PathBuf>,
    /// Directory of frames instead of a manifest.
    #[arg(long, value_name = "DIR")]
    pub frames: Option<PathBuf>,
    /// Store the result in the manifest's dataset_mean/dataset_std.
    #[arg(long, requires = "manifest")]
    pub update: bool,
}
