//! `docdiff` command-line front end.

mod commands;
mod data;
mod error;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::settings::Overrides;

#[derive(Parser, Debug)]
#[command(
    name = "docdiff",
    version,
    about = "Relation classification over document embedding differences"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compose document vectors from a corpus and word embeddings
    Embed(commands::EmbedArgs),
    /// Turn labelled document pairs into difference-vector instances
    Featurize(commands::FeaturizeArgs),
    /// Fit a linear SVM on instances
    Train(commands::TrainArgs),
    /// Score a model on held-out instances
    Evaluate(commands::EvaluateArgs),
    /// Order pairs by SVM distance or cosine similarity
    Rank(commands::RankArgs),
    /// Duplicate detection experiment over every subforum
    RunDup,
    /// Dialogue act experiment with k-fold cross validation
    RunDa,
    /// Write the synthetic datasets to a data root
    Generate(commands::GenerateArgs),
}

fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = cli.overrides.resolve()?;
    let run = || match &cli.command {
        Command::Embed(a) => commands::embed(&cfg, a),
        Command::Featurize(a) => commands::featurize(&cfg, a),
        Command::Train(a) => commands::train(&cfg, a),
        Command::Evaluate(a) => commands::evaluate(&cfg, a),
        Command::Rank(a) => commands::rank(&cfg, a),
        Command::RunDup => commands::run_dup(&cfg),
        Command::RunDa => commands::run_da(&cfg),
        Command::Generate(a) => commands::generate(&cfg, a),
    };
    match cli.overrides.jobs {
        None => run(),
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.overrides.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
