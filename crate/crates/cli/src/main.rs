mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "isac", version, about = "Train and evaluate adversarial implicit-semantic communication models")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(short, long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one key; may be repeated, later wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model (iSAC, GAE or VGAE) and write checkpoints and its history.
    Train(ConfigArgs),
    /// Evaluate a checkpoint or run an oracle suite; CSV to stdout or --out.
    Eval(EvalArgs),
    /// Split a dataset into expert edges and a balanced test set.
    Split(ConfigArgs),
    /// Normalize an edge list: drop self-loops and duplicates.
    Ingest(IngestArgs),
    /// Run the full comparison suite for every method and seed.
    Report(ConfigArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalKind {
    Accuracy,
    Ser,
    Symbols,
    Gradcheck,
    Theorem1,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub kind: EvalKind,

    #[command(flatten)]
    pub cfg: ConfigArgs,

    /// Model checkpoint (needed by accuracy and ser; optional for theorem1).
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,

    /// Write CSV here instead of stdout.
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Raw edge list.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    /// Normalized tab-separated edge list.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,

    /// Separator of the input file: whitespace or csv.
    #[arg(long, default_value = "whitespace")]
    pub format: String,
}

fn command() -> clap::Command {
    let keys = config::keys_help();
    let mut cmd = Cli::command();
    for name in ["train", "eval", "split", "ingest", "report"] {
        let keys = keys.clone();
        cmd = cmd.mut_subcommand(name, |s| s.after_help(keys));
    }
    cmd
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Train(args) => commands::train(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Split(args) => commands::split(&args),
        Command::Ingest(args) => commands::ingest(&args),
        Command::Report(args) => commands::report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
