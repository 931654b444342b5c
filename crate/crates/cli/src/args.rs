use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use exactz::corrector::ErrorBound;
use exactz::CorrectionMode;

#[derive(Parser, Debug)]
#[command(
    name = "exactz",
    version,
    about = "Topology-preserving correction of lossy-compressed scalar fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic field.
    Gen(GenArgs),
    /// Compress a field into an EXCZ blob.
    Compress(CompressArgs),
    /// Reconstruct a field from an EXCZ blob.
    Decompress(DecompressArgs),
    /// Check an externally decompressed field against its original.
    Ingest(IngestArgs),
    /// Correct a decompressed field.
    Correct(CorrectArgs),
    /// Run the constraint detectors on a candidate field.
    Verify(VerifyArgs),
    /// Vulnerability-graph statistics and the iteration bound.
    Bound(BoundArgs),
    /// Correct with the partitioned multi-rank simulator.
    Simulate(SimulateArgs),
    /// Recalls, compression ratios and edit statistics.
    Report(ReportArgs),
    /// Compress, correct and report in one call.
    Pipeline(PipelineConfig),
    /// Dump critical points, extremum graphs and merge trees.
    Topo(TopoArgs),
}

/// Exactly one of `--rel-eb` and `--abs-eb`.
#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct BoundSpec {
    /// Error bound relative to the value range of the original field.
    #[arg(long = "rel-eb", value_name = "XI")]
    pub rel: Option<f64>,
    /// Absolute error bound.
    #[arg(long = "abs-eb", value_name = "XI")]
    pub abs: Option<f64>,
}

impl BoundSpec {
    pub fn bound(&self) -> ErrorBound {
        match (self.rel, self.abs) {
            (Some(r), _) => ErrorBound::Relative(r),
            (None, Some(a)) => ErrorBound::Absolute(a),
            (None, None) => unreachable!("clap enforces one of the two"),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct CorrectionOpts {
    /// Number of steps N the bound is divided into.
    #[arg(long, default_value_t = 5)]
    pub steps: u32,
    #[arg(long, value_enum, default_value_t = ModeArg::Reformulated)]
    pub mode: ModeArg,
    /// Extra edit rounds tolerated beyond N * D_max.
    #[arg(long, value_name = "ROUNDS")]
    pub max_iter_override: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Original,
    Reformulated,
}

impl From<ModeArg> for CorrectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Original => CorrectionMode::Original,
            ModeArg::Reformulated => CorrectionMode::Reformulated,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KindArg {
    Gaussian,
    Monotone,
    Cascade,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DTypeArg {
    F32,
    F64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageArg {
    Deflate,
    Identity,
}

/// Synthetic field selection shared by `gen` and `pipeline`.
#[derive(Args, Debug, Clone)]
pub struct SynthOpts {
    /// Comma-separated dims, slowest axis first (e.g. 64,64 or 32,32,32).
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    pub dims: Vec<usize>,
    /// Number of Gaussian bumps.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Length of the cascade row.
    #[arg(long, default_value_t = 5)]
    pub len: usize,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Gaussian)]
    pub kind: KindArg,
    #[command(flatten)]
    pub synth: SynthOpts,
    #[arg(long, value_enum, default_value_t = DTypeArg::F64)]
    pub dtype: DTypeArg,
    #[arg(long)]
    pub out: PathBuf,
    /// For `cascade`: also write the matching decompressed row.
    #[arg(long)]
    pub out_decomp: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[command(flatten)]
    pub eb: BoundSpec,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = StageArg::Deflate)]
    pub stage: StageArg,
}

#[derive(Args, Debug)]
pub struct DecompressArgs {
    #[arg(long)]
    pub blob: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub orig: PathBuf,
    #[arg(long)]
    pub decomp: PathBuf,
    /// Claimed relative bound; omit both bounds to use the measured error.
    #[arg(long = "rel-eb", value_name = "XI", conflicts_with = "abs")]
    pub rel: Option<f64>,
    #[arg(long = "abs-eb", value_name = "XI")]
    pub abs: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CorrectArgs {
    #[arg(long)]
    pub orig: PathBuf,
    #[arg(long)]
    pub decomp: PathBuf,
    #[command(flatten)]
    pub eb: BoundSpec,
    #[command(flatten)]
    pub opts: CorrectionOpts,
    #[arg(long)]
    pub out_edits: Option<PathBuf>,
    #[arg(long)]
    pub out_field: Option<PathBuf>,
    /// Write the run statistics here instead of stdout.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub orig: PathBuf,
    #[arg(long)]
    pub cand: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Reformulated)]
    pub mode: ModeArg,
    /// Also check the error bound.
    #[arg(long = "rel-eb", value_name = "XI", conflicts_with = "abs")]
    pub rel: Option<f64>,
    #[arg(long = "abs-eb", value_name = "XI")]
    pub abs: Option<f64>,
    /// Violations listed in the report (the counts are always complete).
    #[arg(long, default_value_t = 100)]
    pub limit: usize,
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[arg(long)]
    pub orig: PathBuf,
    #[arg(long)]
    pub decomp: PathBuf,
    #[command(flatten)]
    pub eb: BoundSpec,
    #[arg(long, default_value_t = 5)]
    pub steps: u32,
    /// Edit log whose vertices are counted in `edit_pct`.
    #[arg(long)]
    pub edits: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub orig: PathBuf,
    #[arg(long)]
    pub decomp: PathBuf,
    #[command(flatten)]
    pub eb: BoundSpec,
    #[command(flatten)]
    pub opts: CorrectionOpts,
    #[arg(long, default_value_t = 1)]
    pub ranks: usize,
    /// Measured single-rank time for the efficiency figures.
    #[arg(long, value_name = "SECONDS")]
    pub baseline: Option<f64>,
    #[arg(long)]
    pub out_field: Option<PathBuf>,
    #[arg(long)]
    pub out_edits: Option<PathBuf>,
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub orig: PathBuf,
    #[arg(long)]
    pub cand: PathBuf,
    #[arg(long)]
    pub blob: Option<PathBuf>,
    #[arg(long)]
    pub edits: Option<PathBuf>,
    /// Print a CSV header and row instead of JSON.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug)]
pub struct PipelineConfig {
    /// Synthetic input; mutually exclusive with `--field`.
    #[arg(
        long,
        value_enum,
        required_unless_present = "field",
        conflicts_with = "field"
    )]
    pub gen: Option<KindArg>,
    #[command(flatten)]
    pub synth: SynthOpts,
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[command(flatten)]
    pub eb: BoundSpec,
    #[command(flatten)]
    pub opts: CorrectionOpts,
    /// Run the partitioned simulator with this many ranks.
    #[arg(long)]
    pub ranks: Option<usize>,
    /// Keep the intermediate files here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug)]
pub struct TopoArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
