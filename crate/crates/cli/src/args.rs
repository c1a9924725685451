//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "copscan",
    version,
    about = "Classify transversely convex tubes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a tube spec for a generator family.
    Generate(GenerateArgs),
    /// Classify a tube: cylinder, quadric or not cop.
    Classify(ClassifyArgs),
    /// Dump the obstruction field as CSV with a JSON summary.
    Obstruction(ObstructionArgs),
    /// Compute tilted cross-sections and their centrality.
    Slice(SliceArgs),
    /// Run the ellipsoid criterion on one horizontal section.
    Ellipsoid(EllipsoidArgs),
}

/// Discretization and threshold flags shared by the analysis commands.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Degree cap of the spherical-harmonic representation.
    #[arg(long = "L", value_name = "L")]
    pub l: Option<usize>,
    /// Number of heights in the transverse grid.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Number of tilt directions in the obstruction sweep.
    #[arg(long)]
    pub sweep: Option<usize>,
    /// Rotate the sweep directions by a rotation drawn from this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with threshold overrides.
    #[arg(long, value_name = "FILE")]
    pub thresholds: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Family name, e.g. `ellipsoid`, `twisted`, `cone`.
    pub family: String,
    /// Section dimension d (1: circle sections, 2: sphere sections). Inferred
    /// from `--lambda` or `--semi-axes` when omitted; otherwise 2.
    #[arg(long)]
    pub dim: Option<u8>,
    /// Ellipsoid semi-axes λ_1,...,λ_n (the last one along the axis).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambda: Option<Vec<f64>>,
    /// Section semi-axes.
    #[arg(long, value_delimiter = ',')]
    pub semi_axes: Option<Vec<f64>>,
    /// Twist rate of `twisted`.
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
    /// Axis parameter `b` of the hyperboloids.
    #[arg(long)]
    pub b: Option<f64>,
    /// Centre of `convex_hyperboloid` along the axis.
    #[arg(long, allow_hyphen_values = true)]
    pub center_offset: Option<f64>,
    /// Vertex height of `paraboloid`.
    #[arg(long, allow_hyphen_values = true)]
    pub vertex: Option<f64>,
    /// Parameter `p` of `paraboloid`.
    #[arg(long)]
    pub p: Option<f64>,
    /// Slope of `cone`.
    #[arg(long)]
    pub slope: Option<f64>,
    /// Apex height of `cone`.
    #[arg(long, allow_hyphen_values = true)]
    pub apex: Option<f64>,
    /// Axis curvature of `bent`.
    #[arg(long, allow_hyphen_values = true)]
    pub curvature: Option<f64>,
    /// Odd perturbation amplitude of `odd_perturbed`.
    #[arg(long, allow_hyphen_values = true)]
    pub amplitude: Option<f64>,
    /// Axis direction offset of `cylinder`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub axis_tilt: Option<Vec<f64>>,
    /// Even quartic bump of `cylinder`.
    #[arg(long, allow_hyphen_values = true)]
    pub even_bump: Option<f64>,
    /// Height window `lo,hi`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub window: Option<Vec<f64>>,
    /// JSON file with an affine map applied to the generated tube.
    #[arg(long, value_name = "FILE")]
    pub transform: Option<PathBuf>,
    /// Output spec file (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    /// Output report file (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ObstructionArgs {
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    /// Output directory for `obstruction.csv` and `obstruction.json`. Only
    /// the summary is written, to stdout, when omitted.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    /// Tilt direction `x,y` (d = 1) or `x,y,z` (d = 2); normalized.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub tau: Vec<f64>,
    /// Height of the plane above the origin.
    #[arg(long, allow_hyphen_values = true)]
    pub z0: f64,
    /// Tilt magnitudes, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "0"
    )]
    pub eps: Vec<f64>,
    /// Output directory for `slice.json` and `slice_<k>.csv`. Only the JSON
    /// report is written, to stdout, when omitted.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct EllipsoidArgs {
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    /// Height of the tested section (default: the grid height closest to 0).
    #[arg(long, allow_hyphen_values = true)]
    pub z: Option<f64>,
    /// Output report file (stdout when omitted).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}
