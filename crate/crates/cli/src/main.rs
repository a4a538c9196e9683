use std::path::PathBuf;
use std::process::ExitCode;

use binscene_cli::commands::{self, Common, EstimateSource, EvalArgs, TrainArgs};
use binscene_cli::{CliError, Result};
use binscene_core::scene::Split;
use binscene_sep::Strategy;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "binscene", version, about = "Binaural classroom scene synthesis, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON config file for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// HRIR pack directory or `synthetic`.
    #[arg(long, global = true)]
    hrir: Option<String>,

    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Adult,
    Classroom,
    Finetune,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Passthrough,
    Oracle,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stand-in speech corpus and its manifest.
    Corpus,
    /// Simulate RIRs and render BRIRs into a cache.
    Rooms {
        /// Restrict to these talker distances in metres.
        #[arg(long)]
        distance: Vec<f64>,
    },
    /// Synthesise a scene dataset from a corpus and a BRIR cache.
    Synth {
        #[arg(long)]
        cache: PathBuf,
    },
    /// Train the micro separation model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "classroom")]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 0.5)]
        finetune_fraction: f64,
        /// Initial parameters; required for finetuning.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score estimates on a dataset split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Directory of `<split>/<scene>/est{1,2}.wav`.
        #[arg(long, conflicts_with_all = ["checkpoint", "baseline"])]
        estimates: Option<PathBuf>,
        /// Model whose outputs are scored.
        #[arg(long, conflicts_with = "baseline")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Only score scenes at this talker distance.
        #[arg(long)]
        distance: Option<f64>,
    },
    /// Summarise an existing metrics CSV.
    Report {
        #[arg(long)]
        metrics: PathBuf,
    },
}

fn run(cli: &Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let common = Common {
        config: cli.config.as_deref(),
        seed: cli.seed,
        out: cli.out.as_deref(),
        hrir: cli.hrir.as_deref(),
    };
    match &cli.command {
        Command::Corpus => commands::cmd_corpus(&common).map(drop),
        Command::Rooms { distance } => commands::cmd_rooms(&common, distance).map(drop),
        Command::Synth { cache } => commands::cmd_synth(&common, cache).map(drop),
        Command::Train {
            data,
            strategy,
            finetune_fraction,
            checkpoint,
        } => {
            let strategy = match strategy {
                StrategyArg::Adult => Strategy::Adult,
                StrategyArg::Classroom => Strategy::Classroom,
                StrategyArg::Finetune => Strategy::Finetune,
            };
            let args = TrainArgs {
                data,
                strategy,
                finetune_fraction: *finetune_fraction,
                checkpoint: checkpoint.as_deref(),
            };
            commands::cmd_train(&common, &args).map(drop)
        }
        Command::Eval {
            data,
            split,
            estimates,
            checkpoint,
            baseline,
            distance,
        } => {
            let split: Split = split.parse().map_err(|e: binscene_core::Error| CliError::Config(e.to_string()))?;
            let source = match (estimates, checkpoint, baseline) {
                (Some(d), _, _) => EstimateSource::Dir(d),
                (_, Some(c), _) => EstimateSource::Checkpoint(c),
                (_, _, Some(Baseline::Passthrough)) => EstimateSource::Passthrough,
                (_, _, Some(Baseline::Oracle)) => EstimateSource::Oracle,
                _ => {
                    return Err(CliError::Config(
                        "eval needs one of --estimates, --checkpoint or --baseline".into(),
                    ))
                }
            };
            let args = EvalArgs {
                data,
                split,
                source,
                distance: *distance,
            };
            commands::cmd_eval(&common, &args).map(drop)
        }
        Command::Report { metrics } => commands::cmd_report(&common, metrics).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
