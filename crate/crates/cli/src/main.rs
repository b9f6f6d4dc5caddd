use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedsparsify::data::EnvironmentKind;
use fedsparsify::experiment::{inspect_model, run, ExperimentConfig, Mode, Overrides};
use fedsparsify::Error;

#[derive(Parser)]
#[command(
    name = "fedsparsify",
    version,
    about = "Federated training with progressive magnitude pruning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a single model on the pooled training set, pruning once near the end.
    RunCentralized(RunArgs),
    /// Federated averaging, optionally with a sparsity schedule.
    RunFederated(RunArgs),
    /// Membership-inference attacks against a trained or saved model.
    Attack(RunArgs),
    /// Dense vs sparse single-item inference throughput.
    Bench(RunArgs),
    /// Print the header of a saved sparse model file.
    InspectModel { path: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Final sparsity; 0 disables federated pruning.
    #[arg(long)]
    sparsity: Option<f64>,
    #[arg(long, value_parser = ["uniform-iid", "uniform-noniid", "skewed-iid", "skewed-noniid"])]
    env: Option<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidSpec(_)
        | Error::InvalidSchedule(_)
        | Error::InvalidSparsity(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

fn run_mode(mode: Mode, args: RunArgs) -> Result<String, Error> {
    let mut config = ExperimentConfig::load(&args.config)?;
    let environment = args
        .env
        .map(|s| s.parse::<EnvironmentKind>())
        .transpose()
        .map_err(|e| Error::InvalidConfig(format!("--env: {e}")))?;
    config.apply(&Overrides {
        seed: args.seed,
        output_dir: args.out_dir,
        sparsity: args.sparsity,
        environment,
    });
    let outcome = run(&config, mode)?;
    Ok(serde_json::to_string_pretty(&outcome.summary)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::RunCentralized(a) => run_mode(Mode::Centralized, a),
        Command::RunFederated(a) => run_mode(Mode::Federated, a),
        Command::Attack(a) => run_mode(Mode::Attack, a),
        Command::Bench(a) => run_mode(Mode::Bench, a),
        Command::InspectModel { path } => {
            inspect_model(&path).and_then(|info| Ok(serde_json::to_string_pretty(&info)?))
        }
    };
    match result {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
