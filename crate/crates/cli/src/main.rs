use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pgfn_cli::{commands, CliError, RunConfig, SamplerMethod};

#[derive(Parser)]
#[command(name = "pgfn", version, about = "Morphology-guided fragment GFlowNet pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset, vocabulary, label file and targets.
    GenSynth { config: PathBuf },
    /// Train the contrastive embedder and report its test correlation.
    TrainEmbedder { config: PathBuf },
    /// Train a sampler (gflownet, sql, sac) or run the random baseline for one target.
    TrainSampler {
        config: PathBuf,
        /// Overrides `[sampler] method`.
        #[arg(long)]
        method: Option<String>,
        /// Target id; the first target when omitted.
        #[arg(long)]
        target: Option<String>,
        /// Condition on structure and morphology instead of morphology alone.
        #[arg(long)]
        joint: bool,
    },
    /// Train the assay oracle used for evaluation.
    TrainOracle { config: PathBuf },
    /// Evaluate sampler runs for one target.
    Evaluate {
        config: PathBuf,
        #[arg(long)]
        target: Option<String>,
        /// Comma-separated methods; overrides `[eval] methods`.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        joint: bool,
    },
    /// Aggregate every metrics report under a directory into one table.
    Report { dir: PathBuf },
}

fn parse_method(s: &str) -> Result<SamplerMethod, CliError> {
    SamplerMethod::parse(s.trim()).ok_or_else(|| CliError::Config(format!("unknown method `{s}`")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenSynth { config } => commands::gen_synth(&RunConfig::load(&config)?),
        Command::TrainEmbedder { config } => commands::train_embedder_cmd(&RunConfig::load(&config)?),
        Command::TrainSampler { config, method, target, joint } => {
            let cfg = RunConfig::load(&config)?;
            let method = match method {
                Some(m) => parse_method(&m)?,
                None => cfg.sampler.method,
            };
            commands::train_sampler(&cfg, method, target.as_deref(), joint)
        }
        Command::TrainOracle { config } => commands::train_oracle_cmd(&RunConfig::load(&config)?),
        Command::Evaluate { config, target, methods, joint } => {
            let cfg = RunConfig::load(&config)?;
            let methods = methods.map(|m| m.split(',').map(parse_method).collect::<Result<Vec<_>, _>>()).transpose()?;
            commands::evaluate(&cfg, target.as_deref(), methods.as_deref(), joint)
        }
        Command::Report { dir } => {
            let rows = commands::report(&dir)?;
            print!("{}", commands::format_table(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
