use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use xemplar::{load_config, CliError, PipelineConfig};

#[derive(Parser)]
#[command(name = "xemplar", version, about = "Exemplar-based global explanations for node classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Pipeline config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Dotted `key=value` assignment applied on top of the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage in order.
    Run(Common),
    /// Load and validate the inputs.
    Ingest(Common),
    /// Build the reverse-kNN index.
    Rknn(Common),
    /// Pick exemplars per class.
    Exemplars(Common),
    /// Sample and summarize nodes around each exemplar.
    Summaries(Common),
    /// Search signatures for each exemplar.
    Synth(Common),
    /// Score the explanations and write the report.
    Eval(Common),
    /// Write a synthetic BA-Shapes dataset to the configured input paths.
    GenSynthetic(Common),
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let (common, f): (Common, fn(&PipelineConfig) -> Result<(), CliError>) = match command {
        Command::Run(c) => (c, |cfg| {
            let report = xemplar::cmd_run(cfg)?;
            eprintln!("macro fidelity {:.4}", report.macro_avg.fidelity);
            Ok(())
        }),
        Command::Ingest(c) => (c, xemplar::cmd_ingest),
        Command::Rknn(c) => (c, xemplar::cmd_rknn),
        Command::Exemplars(c) => (c, xemplar::cmd_exemplars),
        Command::Summaries(c) => (c, xemplar::cmd_summaries),
        Command::Synth(c) => (c, xemplar::cmd_synth),
        Command::Eval(c) => (c, xemplar::cmd_eval),
        Command::GenSynthetic(c) => (c, xemplar::cmd_gen_synthetic),
    };
    let cfg = load_config(&common.config, &common.overrides)?;
    f(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
