//! Command-line entry point. All behavior lives in the library; this binary
//! parses flags, dispatches, and maps errors to exit codes
//! (1 validation, 2 endpoint, 3 data).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use medeval::error::Error;
use medeval::runner::{execute, summary_line, CommandKind, RunConfig, RunOptions};

#[derive(Parser)]
#[command(
    name = "medeval",
    version,
    about = "Medical LLM benchmark evaluation and model-ops toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override endpoint parallelism.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Answer from this recorded replay log instead of the network.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Output directory for reports and the recorded replay log.
    #[arg(long, default_value = "medeval_out")]
    out: PathBuf,
    /// Override any config key, e.g. --set eval.ensemble=5.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Multiple-choice benchmark evaluation.
    Eval(RunArgs),
    /// Translation generation scored with corpus BLEU.
    Translate(RunArgs),
    /// LLM-as-judge scoring of candidate answer files.
    Judge(RunArgs),
    /// Quality-score and threshold-filter instruction pairs.
    Filter(RunArgs),
    /// SLERP-merge two checkpoints.
    Merge(RunArgs),
    /// Regenerate reports from a recorded replay log.
    Report(RunArgs),
}

fn run(command: &Command) -> Result<(), Error> {
    let (kind, args) = match command {
        Command::Eval(args) => (Some(CommandKind::Eval), args),
        Command::Translate(args) => (Some(CommandKind::Translate), args),
        Command::Judge(args) => (Some(CommandKind::Judge), args),
        Command::Filter(args) => (Some(CommandKind::Filter), args),
        Command::Merge(args) => (Some(CommandKind::Merge), args),
        Command::Report(args) => (None, args),
    };
    let config = match RunConfig::load_with_overrides(&args.config, &args.set) {
        Ok(config) => config,
        // The merge command also accepts the bare key-value merge config
        // format (path_a, path_b, t, threshold, output) without a section.
        Err(original) if matches!(command, Command::Merge(_)) && args.set.is_empty() => {
            match medeval::merge::load_merge_config(&args.config) {
                Ok(merge) => RunConfig {
                    merge: Some(medeval::runner::MergeSection {
                        path_a: merge.path_a,
                        path_b: merge.path_b,
                        t: merge.t,
                        threshold: merge.parallel_threshold,
                        output: merge.output_path,
                    }),
                    ..RunConfig::default()
                },
                Err(_) => return Err(original),
            }
        }
        Err(e) => return Err(e),
    };
    let kind = match kind {
        Some(kind) => kind,
        // `report` regenerates whatever the config describes, from replay only.
        None => config.implied_command()?,
    };
    let replay = match command {
        Command::Report(_) => Some(args.replay.clone().ok_or_else(|| {
            Error::Config("report needs --replay pointing at a recorded log".into())
        })?),
        _ => args.replay.clone(),
    };
    let options = RunOptions {
        out_dir: args.out.clone(),
        replay,
        seed: args.seed,
        parallelism: args.parallelism,
    };
    let report = execute(kind, &config, &options)?;
    println!("{}", summary_line(&report));
    println!("config digest {}", report.config_digest);
    println!("reports under {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    // Usage mistakes are validation errors (exit 1); --help and --version
    // exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
