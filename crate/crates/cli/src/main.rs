//! `dpool`: feature sets in, pooled descriptors, reports and timings out.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod aggregate;
mod analyze;
mod bench;
mod classify;
mod exit;
mod gen;
mod output;

#[derive(Parser, Debug)]
#[command(name = "dpool", version, about = "Democratic and power-normalized second-order pooling")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Seed for every random choice a subcommand makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for batch work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Format of written matrices and descriptors.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,

    /// Destination file; reports go to stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    #[value(name = "raw-f32")]
    RawF32,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate bursty synthetic feature sets.
    Gen(gen::GenArgs),
    /// Pool feature sets into global descriptors.
    Aggregate(aggregate::AggregateArgs),
    /// Contribution statistics and spectrum flatness of a feature set.
    Analyze(analyze::AnalyzeArgs),
    /// Train and evaluate a one-vs-rest linear classifier on pooled descriptors.
    Classify(classify::ClassifyArgs),
    /// Time the Sinkhorn solver against the Newton-Schulz square root.
    Bench(bench::BenchArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.global.threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    match cli.command {
        Command::Gen(args) => gen::run(&cli.global, args),
        Command::Aggregate(args) => aggregate::run(&cli.global, args),
        Command::Analyze(args) => analyze::run(&cli.global, args),
        Command::Classify(args) => classify::run(&cli.global, args),
        Command::Bench(args) => bench::run(&cli.global, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit::code_for(&err))
        }
    }
}
