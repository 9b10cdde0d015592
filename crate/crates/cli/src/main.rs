use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use relwalk::lrp::{GammaSpec, MemoryMode, PropagationConfig};
use relwalk::oracle::DEFAULT_ENUMERATION_BUDGET;

mod bench;
mod data;
mod eval;
mod explain;
mod gen;
mod train;

#[derive(Debug, Parser)]
#[command(name = "relwalk", version, about = "Top-K relevant walks for GNN predictions")]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Globals {
    /// Seed for data generation, model initialisation and benchmarks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Relevance rule schedule: `const:X` or `linear:X` (X down to 0 at the last layer).
    #[arg(long, global = true, default_value = "linear:3", value_parser = parse_gamma)]
    pub gamma: GammaSpec,
    /// Keep relevance tensors in factored form instead of materialising slices.
    #[arg(long, global = true)]
    pub low_mem: bool,
    /// Maximum number of walks an exhaustive search may enumerate.
    #[arg(long, global = true, default_value_t = DEFAULT_ENUMERATION_BUDGET)]
    pub budget: u128,
}

impl Globals {
    pub fn propagation(&self, depth: usize) -> anyhow::Result<PropagationConfig> {
        let memory = if self.low_mem { MemoryMode::Factorized } else { MemoryMode::Auto };
        Ok(PropagationConfig::new(self.gamma.schedule(depth)?).memory(memory))
    }
}

fn parse_gamma(s: &str) -> Result<GammaSpec, String> {
    s.parse().map_err(|e: relwalk::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen {
        #[command(subcommand)]
        kind: gen::GenKind,
    },
    /// Train a GCN or GIN model on a generated dataset.
    Train(train::TrainArgs),
    /// Explain one prediction with its top-K relevant walks (JSON lines).
    Explain(explain::ExplainArgs),
    /// Evaluation metrics as CSV on stdout.
    Eval {
        #[command(subcommand)]
        metric: eval::Metric,
    },
    /// Timing table of the search methods as CSV on stdout.
    Bench(bench::BenchArgs),
}

/// Argument error detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Gcn,
    Gin,
}

impl From<ArchArg> for relwalk::model::Arch {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Gcn => relwalk::model::Arch::Gcn,
            ArchArg::Gin => relwalk::model::Arch::Gin,
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use relwalk::Error as E;
    if err.downcast_ref::<Invalid>().is_some() {
        return 2;
    }
    match err.downcast_ref::<E>() {
        Some(E::BudgetExceeded { .. }) => 3,
        Some(E::Shape { .. } | E::Validation { .. } | E::Parameter { .. } | E::Consistency(_) | E::Parse { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.globals;
    let result = match cli.command {
        Command::Gen { kind } => gen::run(g, kind),
        Command::Train(args) => train::run(g, args),
        Command::Explain(args) => explain::run(g, args),
        Command::Eval { metric } => eval::run(g, metric),
        Command::Bench(args) => bench::run(g, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Sorted copy without duplicates.
pub fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

pub fn out_path(p: &PathBuf) -> anyhow::Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}
