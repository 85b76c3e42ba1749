use clap::{Args, Parser, Subcommand, ValueEnum};
use cmaxloc_core::synthbench::{PlotKind, SolverKind};
use cmaxloc_core::{BoundMode, VotingMode};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "cmaxloc",
    version,
    about = "Gravity-aided globally optimal camera localization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene file.
    Synth(SynthArgs),
    /// Solve a scene file and print the result as JSON.
    Solve(SolveArgs),
    /// Run a Monte-Carlo sweep with the prioritized-voting solver by default.
    Bench(SweepArgs),
    /// Run a Monte-Carlo sweep comparing all solvers by default.
    Compare(SweepArgs),
    /// Turn sweep results into long-format plot data.
    ExportPlot(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// Point correspondences.
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    /// Line correspondences.
    #[arg(long, default_value_t = 0)]
    pub lines: usize,
    #[arg(long, default_value_t = 0.0)]
    pub outlier_rate: f64,
    /// Pixel noise bound n.
    #[arg(long, default_value_t = 2.0)]
    pub noise: f64,
    /// Standard deviation of the pitch and roll prior noise, in degrees.
    #[arg(long, default_value_t = 0.0)]
    pub imu_sigma: f64,
    /// Focal length in pixels, used for both axes.
    #[arg(long, default_value_t = 400.0)]
    pub focal: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VotingArg {
    Prioritized,
    DimensionWise,
}

impl From<VotingArg> for VotingMode {
    fn from(v: VotingArg) -> Self {
        match v {
            VotingArg::Prioritized => VotingMode::Prioritized,
            VotingArg::DimensionWise => VotingMode::DimensionWise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundArg {
    PairMin,
    Propagated,
}

impl From<BoundArg> for BoundMode {
    fn from(b: BoundArg) -> Self {
        match b {
            BoundArg::PairMin => BoundMode::PairMin,
            BoundArg::Propagated => BoundMode::Propagated,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = BoundArg::PairMin)]
    pub bound_mode: BoundArg,
    /// RANSAC samples used to seed the rotation search; 0 disables seeding.
    #[arg(long, default_value_t = 2000)]
    pub ransac_iterations: usize,
    #[arg(long, default_value_t = 50)]
    pub refine_iters: usize,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_enum, default_value_t = VotingArg::Prioritized)]
    pub voting: VotingArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Seed of the RANSAC stage.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the search trace as JSON lines to this path.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Include wall-clock stage timings in the output.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Outlier rates as lo:hi:step.
    #[arg(long, group = "sweep")]
    pub outlier_sweep: Option<String>,
    /// Prior noise standard deviations in degrees as lo:hi:step.
    #[arg(long, group = "sweep")]
    pub imu_sigma_sweep: Option<String>,
    /// Total correspondence counts as lo:hi:step.
    #[arg(long, group = "sweep")]
    pub n_sweep: Option<String>,
    /// Comma-separated subset of ours, ours-dv, ransac.
    #[arg(long, value_delimiter = ',')]
    pub solvers: Option<Vec<SolverKind>>,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Results directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Results directory, or a summary or timing CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_plot_kind)]
    pub kind: PlotKind,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_plot_kind(s: &str) -> Result<PlotKind, String> {
    s.parse()
}
