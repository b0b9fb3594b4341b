use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use diffeoflow::Method;

#[derive(Debug, Parser)]
#[command(name = "diffeoflow", version, about = "Diffeomorphic surface deformation toolkit")]
pub struct Cli {
    /// Seed for every random draw (surface sampling, fixtures).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Overrides DIFFEOFLOW_LOG (error, warn, info, debug, trace).
    #[arg(long, global = true)]
    pub log_level: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a genus-0 template family enclosing the input meshes.
    BuildTemplate(BuildTemplateArgs),
    /// Run a mesh through a deformation chain.
    Deform(DeformArgs),
    /// Fit white and pial deformation chains to target surfaces.
    Fit(FitArgs),
    /// Compare a predicted surface with a reference surface.
    Metrics(MetricsArgs),
    /// Sample an analytic flow field onto a grid.
    GenField(GenFieldArgs),
}

#[derive(Debug, Args)]
pub struct BuildTemplateArgs {
    /// Closed training meshes (.ply or .obj).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, short)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    #[arg(long, default_value_t = 4)]
    pub margin_voxels: usize,
    /// Extraction level above zero, in voxels.
    #[arg(long, default_value_t = 1.0)]
    pub iso_voxels: f64,
    #[arg(long, default_value_t = 10)]
    pub smoothing_iterations: usize,
    #[arg(long, default_value_t = 0.5)]
    pub smoothing_lambda: f64,
    /// Remeshing target edge length, in voxels.
    #[arg(long, default_value_t = 2.5)]
    pub edge_voxels: f64,
    #[arg(long, default_value_t = 8)]
    pub remesh_iterations: usize,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
}

#[derive(Debug, Args)]
pub struct DeformArgs {
    /// Seed mesh; the manifest's seed is used when omitted.
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Override the solver of every stage.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Override the step count of every stage.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Also write the mesh after every stage into this directory.
    #[arg(long)]
    pub intermediates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Template meshes, coarsest first; stage i is fitted on template i
    /// (the last one for the remaining stages).
    #[arg(long = "template", required = true)]
    pub templates: Vec<PathBuf>,
    #[arg(long)]
    pub white: PathBuf,
    #[arg(long)]
    pub pial: PathBuf,
    #[arg(long, short)]
    pub out_dir: PathBuf,
    /// JSON pipeline configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Field magnitude limit in voxel spacings per unit flow time.
    #[arg(long)]
    pub clamp_voxels: Option<f64>,
    /// Points sampled from each target surface.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    #[arg(long, default_value_t = diffeoflow::metrics::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenFieldArgs {
    /// translation, rotation, radial or shear.
    pub kind: String,
    /// Comma-separated parameters for the kind.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Vec<f64>,
    /// Nodes per axis: one value or three.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    pub dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,-1,-1")]
    pub origin: Vec<f64>,
    /// Node spacing: one value or three. Defaults to spanning two units
    /// per axis from the origin.
    #[arg(long, value_delimiter = ',')]
    pub spacing: Vec<f64>,
    /// Output base path; writes <out>.ffjson and <out>.ffraw.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Euler,
    Rk4,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Euler => Method::Euler,
            MethodArg::Rk4 => Method::Rk4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}
