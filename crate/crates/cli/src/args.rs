use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "bellpost",
    version,
    about = "Sharpened Bell inequalities under coincidence postselection"
)]
pub struct Cli {
    /// Output format. Defaults to JSON, except `table1` which defaults to CSV.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Extra catalog records (JSON list) merged over the builtin catalog.
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the named inequalities with their constants.
    Catalog,
    /// Classical bound by exhaustive enumeration.
    Bound(BoundArgs),
    /// Quantum value on the GHZ state for given or optimized settings.
    Quantum(QuantumArgs),
    /// Sharpened bound at given conditional efficiencies.
    Sharpen(SharpenArgs),
    /// Threshold conditional efficiency for a quantum value.
    Threshold(ThresholdArgs),
    /// Ring source model of multipartite entanglement with lossy detectors.
    #[command(subcommand)]
    Ys(YsCommand),
    /// d-separation query on a graph file or a built-in Bell diagram.
    Dsep(DsepArgs),
    /// Randomized property checks.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Threshold efficiencies for CHSH, Mermin and Svetlichny.
    Table1,
}

#[derive(Debug, Args)]
pub struct InequalityArgs {
    #[arg(long, short = 'i', default_value = "chsh")]
    pub inequality: String,
    /// Number of parties (defaults to 2 for chsh, 3 otherwise).
    #[arg(long, short = 'n')]
    pub parties: Option<usize>,
}

impl InequalityArgs {
    pub fn parties(&self) -> usize {
        self.parties
            .unwrap_or(if self.inequality.eq_ignore_ascii_case("chsh") {
                2
            } else {
                3
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClassArg {
    Lhv,
    Hlnhv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConstantArg {
    /// Algebraic maximum `C`.
    C,
    /// Setting-distance weighted constant.
    COpt,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub ineq: InequalityArgs,
    /// Model class (defaults to the inequality's own class).
    #[arg(long, value_enum)]
    pub class: Option<ClassArg>,
}

#[derive(Debug, Args)]
pub struct QuantumArgs {
    #[command(flatten)]
    pub ineq: InequalityArgs,
    /// JSON list of `[theta, phi]` pairs per party and setting.
    #[arg(long, conflicts_with = "optimize")]
    pub angles: Option<PathBuf>,
    /// Optimize the measurement angles (default when no angles are given).
    #[arg(long)]
    pub optimize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
}

#[derive(Debug, Args)]
pub struct SharpenArgs {
    #[command(flatten)]
    pub ineq: InequalityArgs,
    /// Conditional efficiencies in (0, 1].
    #[arg(long = "eta-c", num_args = 1.., required = true)]
    pub eta_c: Vec<f64>,
    #[arg(long, value_enum)]
    pub class: Option<ClassArg>,
    #[arg(long, value_enum, default_value = "c-opt")]
    pub constant: ConstantArg,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub ineq: InequalityArgs,
    /// Quantum value (defaults to the catalog value).
    #[arg(long)]
    pub quantum_value: Option<f64>,
    #[arg(long, value_enum)]
    pub class: Option<ClassArg>,
    #[arg(long, value_enum, default_value = "c-opt")]
    pub constant: ConstantArg,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    #[arg(long, short = 'n', default_value_t = 3)]
    pub parties: usize,
    #[arg(long, default_value_t = 1.0)]
    pub eta_det: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta_tra: f64,
    /// Probability of one count from two surviving particles (defaults to
    /// independent detection, `2η(1-η)`).
    #[arg(long = "eta-1of2", conflicts_with = "on_off")]
    pub eta_1of2: Option<f64>,
    /// On-off detectors that cannot resolve two particles.
    #[arg(long)]
    pub on_off: bool,
}

#[derive(Debug, Subcommand)]
pub enum YsCommand {
    /// Closed-form conditional efficiency.
    Analytic(DetectorArgs),
    /// Monte Carlo estimate of the conditional efficiency.
    Simulate(SimulateArgs),
    /// Detector efficiency reaching a target conditional efficiency.
    Threshold(YsThresholdArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub shards: usize,
}

#[derive(Debug, Args)]
pub struct YsThresholdArgs {
    #[arg(long, short = 'n', default_value_t = 3)]
    pub parties: usize,
    /// Target conditional efficiency.
    #[arg(long = "eta-c-star", conflicts_with = "inequality")]
    pub eta_c_star: Option<f64>,
    /// Use the threshold of this catalog inequality (on `--parties` parties).
    #[arg(long)]
    pub inequality: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub eta_tra: f64,
    #[arg(long = "eta-1of2", conflicts_with = "on_off")]
    pub eta_1of2: Option<f64>,
    #[arg(long)]
    pub on_off: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DiagramArg {
    Lhv,
    Bipartition,
    AllPairs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LinkArg {
    Confounded,
    AToD,
    DToA,
}

#[derive(Debug, Args)]
pub struct DsepArgs {
    /// Graph file `{nodes, edges, bidirected}`.
    #[arg(long, conflicts_with = "diagram")]
    pub graph: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub diagram: Option<DiagramArg>,
    #[arg(long, default_value_t = 2)]
    pub parties: usize,
    /// Groups for `--diagram bipartition`, 1-based, e.g. `1/23`.
    #[arg(long)]
    pub groups: Option<String>,
    #[arg(long, value_enum, default_value = "confounded")]
    pub link: LinkArg,
    #[arg(long, value_delimiter = ',', required = true)]
    pub from: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub to: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub given: Vec<String>,
    /// Also measure the largest CI deviation over this many random
    /// binary parameterizations.
    #[arg(long)]
    pub ci_restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum VerifyCommand {
    /// Random LHV models against the sharpened LHV bound.
    AppendixB(SuiteArgs),
    /// Random HLNHV models against the sharpened HLNHV bound.
    AppendixC(SuiteArgs),
    /// Fair-sampling models against the unsharpened bound.
    FairSampling(SuiteArgs),
    /// Setting independence of the posterior under conservation.
    Conservation(ConservationArgs),
    /// Graphical and functional claims about detection postselection.
    Causal(CausalArgs),
    /// Search for an LHV model violating CHSH after postselection.
    Loophole(LoopholeArgs),
}

#[derive(Debug, Args)]
pub struct ConservationArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct CausalArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Negative control: use models without particle conservation.
    #[arg(long)]
    pub no_conservation: bool,
}

#[derive(Debug, Args)]
pub struct LoopholeArgs {
    #[command(flatten)]
    pub ineq: InequalityArgs,
    #[arg(long, default_value_t = 40_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 4)]
    pub support: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
