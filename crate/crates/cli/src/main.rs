//! `kcprobe`: validate activation dumps, train and evaluate probes, run shape
//! analyses, score live activations and plot curves.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.
//! Diagnostics go to stderr; data goes to files or stdout.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kcprobe::experiment::{Grouping, LayerSelection};
use kcprobe::store::{LayerKind, TaskKind};

#[derive(Parser, Debug)]
#[command(
    name = "kcprobe",
    version,
    about = "Knowledge-conflict probing over residual-stream activation dumps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a dump file and print its header summary and record counts.
    Validate {
        /// Path to an ACPD dump.
        dump: PathBuf,
    },
    /// Train one probe per (layer, kind, seed) and write probes plus a curves CSV.
    Train(TrainArgs),
    /// Evaluate saved probes on their held-out splits and write a curves CSV.
    Eval(EvalArgs),
    /// Per-group skewness and norm curves of the residual stream.
    Skew(SkewArgs),
    /// Score raw little-endian f32 vectors for conflict and knowledge source.
    Detect(DetectArgs),
    /// Render SVG line plots from a curves CSV.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dump: PathBuf,
    /// conflict or selection.
    #[arg(long, default_value = "conflict", value_parser = parse_task)]
    task: TaskKind,
    /// `all`, a range like `8-16`, or a comma list.
    #[arg(long, default_value = "all", value_parser = parse_layers)]
    layers: LayerSelection,
    /// Comma-separated subset of hidden,attn,mlp.
    #[arg(long, default_value = "hidden", value_delimiter = ',', value_parser = parse_kind)]
    kinds: Vec<LayerKind>,
    /// Number of seeds; seeds 0..N-1 are used.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// L1 penalty weight.
    #[arg(long, default_value_t = 3e-4)]
    lambda: f64,
    /// Fraction of questions assigned to training.
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Decision threshold for accuracy.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 5000)]
    max_iterations: usize,
    /// Stop when one step lowers the objective by less than this.
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// z-score features with training-split statistics.
    #[arg(long)]
    standardize: bool,
    /// Worker threads; 0 uses every core. Output does not depend on it.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory for probe JSON files and curves.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory of probe JSON files.
    #[arg(long)]
    probes: PathBuf,
    #[arg(long)]
    dump: PathBuf,
    /// Curves CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Must match the fraction used at training time.
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct SkewArgs {
    #[arg(long)]
    dump: PathBuf,
    /// Comma-separated subset of kurtosis,hoyer,gini,l1_norm,l2_norm.
    #[arg(long, default_value = "kurtosis,hoyer,gini", value_delimiter = ',')]
    metrics: Vec<String>,
    /// selection (e_C_a_C vs e_C_a_M) or evidence (with_e_C vs with_e_M).
    #[arg(long, default_value = "selection", value_parser = parse_grouping)]
    grouping: Grouping,
    #[arg(long, default_value = "hidden", value_delimiter = ',', value_parser = parse_kind)]
    kinds: Vec<LayerKind>,
    #[arg(long, default_value = "all", value_parser = parse_layers)]
    layers: LayerSelection,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    conflict_probe: PathBuf,
    #[arg(long)]
    selection_probe: Option<PathBuf>,
    #[arg(long, default_value_t = 14)]
    layer: usize,
    #[arg(long, default_value = "hidden", value_parser = parse_kind)]
    kind: LayerKind,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Raw f32 LE vectors; reads standard input when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Curves CSV produced by train, eval or skew.
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory for SVG plots.
    #[arg(long)]
    out: PathBuf,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse()
}

fn parse_kind(s: &str) -> Result<LayerKind, String> {
    s.parse()
}

fn parse_layers(s: &str) -> Result<LayerSelection, String> {
    s.parse()
}

fn parse_grouping(s: &str) -> Result<Grouping, String> {
    s.parse()
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

/// Parses `args` (program name first) and runs the command.
fn run_cli<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Validate { dump } => commands::validate(&dump),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Skew(a) => commands::skew(a),
        Command::Detect(a) => commands::detect(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(commands::Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
    }
}

fn main() -> ExitCode {
    run_cli(std::env::args_os())
}
