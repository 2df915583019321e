use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Spatial mixtures of SPD matrix fields: simulate, fit, test and inspect.
#[derive(Debug, Parser)]
#[command(name = "spdmix", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its ground-truth difference mask.
    Simulate(SimulateArgs),
    /// Run the sampler and write a trace plus a JSON summary.
    Fit(FitArgs),
    /// Voxel-wise group-difference decisions from a trace.
    Test(TestArgs),
    /// Empirical, simulated or model variogram curves as CSV.
    #[command(subcommand)]
    Variogram(VariogramCommand),
    /// Posterior summaries and stationarity checks for a trace.
    Diagnose(DiagnoseArgs),
    /// Convert a CSV tensor table into a tensor field file.
    ImportCsv(ImportCsvArgs),
    /// Write a tensor field file as a CSV table.
    ExportCsv(ExportCsvArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    Mixture,
    Cholesky,
    Prior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// 40 x 40 grids, the full-size design.
    Paper,
    /// 20 x 20 grids with fewer subjects.
    Desk,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    #[arg(long, value_enum, default_value = "paper")]
    pub scale: Scale,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Run configuration (JSON). Input paths in it are relative to the file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tensor field files; override the config's inputs.
    pub inputs: Vec<PathBuf>,
    /// Trace output; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON output; defaults to the trace path with a .json extension.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip the positive-definiteness check on load.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Declare a difference where P(h0 != h1) exceeds this.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Ground-truth mask; adds TPR/FPR/FDR to the report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// A second trace on the same data; adds the Rand index between the
    /// two decision maps.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Directory for difference.csv, difference.spdm and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum VariogramCommand {
    /// Mean squared Frobenius differences from tensor field files.
    Empirical(EmpiricalArgs),
    /// Monte Carlo estimate of the label-disagreement probability.
    McSpatial(McSpatialArgs),
    /// Non-spatial factor times a simulated spatial term.
    Model(ModelArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PairKind {
    /// Distinct subjects of the same group.
    Within,
    /// A control subject against a treatment subject.
    Between,
    /// Each subject against itself.
    Individual,
}

#[derive(Debug, Args)]
pub struct EmpiricalArgs {
    #[arg(long, value_enum)]
    pub pair: PairKind,
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    pub max_dist: f64,
    /// Restrict individual mode to one subject id.
    #[arg(long)]
    pub subject: Option<String>,
    /// Per-distance cap on site pairs before subsampling.
    #[arg(long, default_value_t = 1_000_000)]
    pub pair_cap: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Role {
    SameSubject,
    SameGroup,
    BetweenGroups,
}

#[derive(Debug, Args)]
pub struct SpatialArgs {
    /// Grid extents, e.g. 40,40.
    #[arg(long, value_delimiter = ',', default_value = "40,40")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub xi: f64,
    #[arg(long, default_value_t = 2)]
    pub subjects: usize,
    #[arg(long, value_enum, default_value = "same-subject")]
    pub role: Role,
    #[arg(long, default_value_t = 10.0)]
    pub max_dist: f64,
    #[arg(long, default_value_t = 500)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 2000)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 20)]
    pub replications: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct McSpatialArgs {
    #[command(flatten)]
    pub spatial: SpatialArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub spatial: SpatialArgs,
    #[arg(long)]
    pub m: f64,
    #[arg(long)]
    pub nu: f64,
    /// Packed upper triangle of the hyper-mean (row-major); identity 3x3
    /// when omitted.
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    /// Use the plain product of the two factors, without the within-cluster
    /// nugget.
    #[arg(long)]
    pub separable: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Summary JSON output; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the retained hyperparameter draws as CSV.
    #[arg(long)]
    pub chains: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    Control,
    Treatment,
}

#[derive(Debug, Args)]
pub struct ImportCsvArgs {
    pub csv: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
    #[arg(long)]
    pub id: String,
    #[arg(long, value_enum)]
    pub group: GroupArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct ExportCsvArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lenient: bool,
}
