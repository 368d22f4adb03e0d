use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use curation_lab::cli::{execute, load_spec, Command};
use curation_lab::Error;

#[derive(Parser)]
#[command(name = "curation-lab", version, about = "Batch runner for curated-retraining experiments")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Run the retraining loop, one trajectory per seed.
    Simulate(RunArgs),
    /// Compare attack methods over one retraining round.
    AttackBench(RunArgs),
    /// Check the moment bounds on randomized and fixed scenarios.
    VerifyBounds(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the key = value experiment spec.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory (overrides the spec's `out`; default "out").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed list (overrides the spec's `seeds`).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

impl CliCommand {
    fn wanted(&self) -> Command {
        match self {
            CliCommand::Simulate(_) => Command::Simulate,
            CliCommand::AttackBench(_) => Command::AttackBench,
            CliCommand::VerifyBounds(_) => Command::VerifyBounds,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            CliCommand::Simulate(a) | CliCommand::AttackBench(a) | CliCommand::VerifyBounds(a) => a,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let wanted = cli.command.wanted();
    let args = cli.command.args();

    let mut spec = match load_spec(&args.spec) {
        Ok(spec) => spec,
        Err(e) => return fail(&e),
    };
    if spec.command != wanted {
        eprintln!("error: spec says command = {}, but the {wanted} subcommand was invoked", spec.command);
        return ExitCode::from(1);
    }
    if let Some(seeds) = &args.seeds {
        spec.seeds = seeds.clone();
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| spec.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    match execute(&spec, &out_dir) {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            if outcome.mandatory_ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("mandatory bound checks failed; see the report");
                ExitCode::from(3)
            }
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Spec(_) | Error::InvalidInput(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}
