//! The `saegraph` command line: every analysis as a subcommand writing
//! deterministic artifacts and a run manifest into the output directory.

mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use saegraph_core::community::Algorithm;
use saegraph_core::sae::EncodeMode;
use saegraph_core::sim::MeasureKind;

pub use config::RunConfig;

/// Failure of a run, mapped to the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Exit code 2.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Exit code 3.
    #[error("missing input: {0}")]
    Missing(String),
    /// Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    pub(crate) fn from_io(path: &Path, e: std::io::Error) -> Self {
        let msg = format!("{}: {e}", path.display());
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Missing(msg)
        } else {
            CliError::Runtime(msg)
        }
    }
}

impl From<saegraph_core::Error> for CliError {
    fn from(e: saegraph_core::Error) -> Self {
        use saegraph_core::Error as E;
        match &e {
            E::Missing(m) => CliError::Missing(m.clone()),
            E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => CliError::Missing(e.to_string()),
            E::Invalid(m) => CliError::Config(m.clone()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<saegraph_serve::ServeError> for CliError {
    fn from(e: saegraph_serve::ServeError) -> Self {
        use saegraph_serve::ServeError as S;
        match &e {
            S::MissingArtifacts(_) => CliError::Missing(e.to_string()),
            S::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "saegraph",
    version,
    about = "Cross-layer similarity statistics and feature graphs for sparse autoencoders"
)]
pub struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    pub show_config: bool,
    /// Output directory for artifacts and manifests.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic activation dataset with planted motifs.
    Synth(SynthArgs),
    /// Per-feature maximum activations over a dataset.
    ScanMax(DataArgs),
    /// Stream a dataset and write similarity matrices per layer pair.
    ComputeSims(SimsArgs),
    /// Build a multipartite feature graph from matrices.
    BuildGraph(GraphArgs),
    /// Detect communities in a graph document.
    Communities(CommunityArgs),
    /// Classify features as passed through, disappearing or appearing.
    Classify(ClassifyArgs),
    /// Neighbor counts as a function of the similarity threshold.
    Curve(CurveArgs),
    /// Search for quasi AND/OR gates.
    Gates(GateArgs),
    /// Project next-layer reconstruction errors onto disappearing features.
    ProjectErrors(ProjectArgs),
    /// Boxplot summaries of ablation effects per similarity bin.
    AblationBins(AblationArgs),
    /// Binary-search a threshold from yes/no equivalence judgments.
    Calibrate(CalibrateArgs),
    /// Compare two sets of matrices (e.g. runs on different token counts).
    CompareMatrices(CompareArgs),
    /// Similarity histograms.
    Histogram(HistogramArgs),
    /// Serve graphs and details over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Full synthetic spec (JSON or TOML) instead of the planted layout.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Where to write the dataset (default: <out>/data).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub layers: Option<u32>,
    #[arg(long)]
    pub features: Option<u32>,
    #[arg(long)]
    pub tokens: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub and_gates: Option<usize>,
    #[arg(long)]
    pub or_gates: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Background firing probability per feature and token.
    #[arg(long)]
    pub background: Option<f64>,
    /// Chain copy noise.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset manifest or its directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Maximum activation table (default: <out>/max.json).
    #[arg(long)]
    pub max: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub measures: Option<Vec<MeasureKind>>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub min_co: Option<u64>,
    /// Keep pairs regardless of their co-activation count.
    #[arg(long)]
    pub no_min_co: bool,
    /// Sparsification floor; 0 disables.
    #[arg(long)]
    pub floor: Option<f64>,
    #[arg(long)]
    pub tile_edge: Option<usize>,
    #[arg(long)]
    pub memory_budget_mb: Option<u64>,
    /// Upstream layers to process.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<u32>>,
    /// SAE weight files, needed for decoder_cosine.
    #[arg(long)]
    pub sae: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimsInput {
    /// Directory of matrix files (default: <out>/sims).
    #[arg(long)]
    pub sims: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[command(flatten)]
    pub sims: SimsInput,
    #[arg(long)]
    pub measure: Option<MeasureKind>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Every edge gets weight 1.
    #[arg(long)]
    pub unweighted: bool,
    /// Keep isolated features as nodes.
    #[arg(long)]
    pub all_nodes: bool,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Classification report whose forward classes label the nodes.
    #[arg(long)]
    pub classification: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommunityArgs {
    /// Graph document (default: the one build-graph writes for the config).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub resolution: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub min_size: Option<usize>,
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long)]
    pub min_layers: Option<usize>,
    /// SAE weight files for intra-layer decoder cosine of each community.
    #[arg(long)]
    pub sae: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub sims: SimsInput,
    #[arg(long)]
    pub measure: Option<MeasureKind>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub sims: SimsInput,
    #[arg(long)]
    pub measure: Option<MeasureKind>,
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    #[command(flatten)]
    pub sims: SimsInput,
    /// Measures to search (default: necessity and sufficiency).
    #[arg(long, value_delimiter = ',')]
    pub measures: Option<Vec<MeasureKind>>,
    #[arg(long)]
    pub min_sim: Option<f64>,
    #[arg(long)]
    pub arity: Option<usize>,
    #[arg(long)]
    pub max_arity: Option<usize>,
    /// Allow measures other than necessity and sufficiency.
    #[arg(long)]
    pub allow_any_measure: bool,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub max: Option<PathBuf>,
    #[command(flatten)]
    pub sims: SimsInput,
    /// Residual frames of layer k+1.
    #[arg(long)]
    pub residuals: PathBuf,
    /// SAE weights of layer k.
    #[arg(long)]
    pub sae: PathBuf,
    /// SAE weights of layer k+1.
    #[arg(long)]
    pub next_sae: PathBuf,
    #[arg(long)]
    pub necessity_max: Option<f64>,
    #[arg(long)]
    pub act_min_frac: Option<f64>,
    #[arg(long)]
    pub fire_frac: Option<f64>,
    /// Study these layer-k feature indices instead of the necessity
    /// selection.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<u32>>,
    #[arg(long, default_value = "relu")]
    pub mode: EncodeModeArg,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum EncodeModeArg {
    Relu,
    Linear,
}

impl From<EncodeModeArg> for EncodeMode {
    fn from(m: EncodeModeArg) -> Self {
        match m {
            EncodeModeArg::Relu => EncodeMode::Relu,
            EncodeModeArg::Linear => EncodeMode::Linear,
        }
    }
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    /// CSV with header `measure,layer,up,down,similarity,effect`.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Matrix file to calibrate on.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Read y/n answers from this file instead of the terminal.
    #[arg(long, conflicts_with = "oracle_cutoff")]
    pub answers: Option<PathBuf>,
    /// Scripted judge: pairs are equivalent iff similarity >= this.
    #[arg(long)]
    pub oracle_cutoff: Option<f64>,
    #[arg(long)]
    pub start: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub max_probes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First matrix file or directory.
    pub first: PathBuf,
    /// Second matrix file or directory.
    pub second: PathBuf,
    #[arg(long)]
    pub bins: Option<usize>,
    /// Output file name under the output directory.
    #[arg(long, default_value = "compare.json")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[command(flatten)]
    pub sims: SimsInput,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Service configuration (TOML or JSON).
    #[arg(long)]
    pub serve_config: PathBuf,
    /// Bind address; beats the environment and the file.
    #[arg(long)]
    pub bind: Option<String>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::ScanMax(_) => "scan-max",
            Command::ComputeSims(_) => "compute-sims",
            Command::BuildGraph(_) => "build-graph",
            Command::Communities(_) => "communities",
            Command::Classify(_) => "classify",
            Command::Curve(_) => "curve",
            Command::Gates(_) => "gates",
            Command::ProjectErrors(_) => "project-errors",
            Command::AblationBins(_) => "ablation-bins",
            Command::Calibrate(_) => "calibrate",
            Command::CompareMatrices(_) => "compare-matrices",
            Command::Histogram(_) => "histogram",
            Command::Serve(_) => "serve",
        }
    }
}

/// Effective configuration: defaults, then the config file, then flags.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(command) = &cli.command {
        commands::apply_flags(command, &mut cfg);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli)?;
    if cli.show_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    match &cli.command {
        Some(command) => commands::dispatch(command, &cfg),
        None => Err(CliError::Config("a subcommand is required; see --help".into())),
    }
}

/// Parses arguments, runs, and reports errors on stderr.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("saegraph: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
