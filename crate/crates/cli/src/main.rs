//! `recoslip`: generate shifted graphs, train detectors, evaluate scores
//! and run comparison studies.
//!
//! Every command resolves its configuration (file values, then flags) into
//! an [`Invocation`], writes it to `manifest.json` in the output directory
//! and only then starts computing. `recoslip rerun` replays a manifest.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use recoslip::eval::{Method, StudyKind};

use crate::manifest::Invocation;

#[derive(Parser, Debug)]
#[command(name = "recoslip", version, about = "Novel node category detection under subpopulation shift")]
struct Cli {
    /// Suppress warnings on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and print its SCAR diagnostic.
    Gen(GenArgs),
    /// Train one method and write scores, checkpoint and splits.
    Train(TrainArgs),
    /// Score a prediction file on the target test split.
    Eval(EvalArgs),
    /// Run a study and write report.json, summary.csv and plot data.
    Study(StudyArgs),
    /// Replay the invocation recorded in a manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Dataset spec (TOML: `[graph]`, `[shift]`, optional `split_mode`).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    spec: Option<PathBuf>,
    /// Built-in benchmark: ns, ms or s.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    method: Method,
    /// Dataset directory (nodes.csv, edges.csv, optional novel.csv).
    #[arg(long)]
    data: PathBuf,
    /// TOML with optional `seed`, `[reco_slip]` and `[baseline]` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config file seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Split file written by `train`.
    #[arg(long, conflicts_with = "seed", required_unless_present = "seed")]
    splits: Option<PathBuf>,
    /// Recompute the splits from this seed instead.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write eval.json and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// main, ablation or shift.
    study: StudyKind,
    /// Study TOML; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default 1, fully reproducible).
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args, Debug)]
struct RerunArgs {
    manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, m: &log::Metadata) -> bool {
        m.level() <= log::max_level()
    }
    fn log(&self, r: &log::Record) {
        if self.enabled(r.metadata()) {
            eprintln!("{}: {}", r.level().as_str().to_lowercase(), r.args());
        }
    }
    fn flush(&self) {}
}

fn resolve(command: Command) -> recoslip::Result<Invocation> {
    match command {
        Command::Gen(a) => commands::resolve_gen(a.spec.as_deref(), a.preset.as_deref(), a.seed, a.out),
        Command::Train(a) => commands::resolve_train(a.method, a.data, a.config.as_deref(), a.seed, a.out),
        Command::Eval(a) => Ok(Invocation::Eval {
            scores: a.scores,
            data: a.data,
            splits: a.splits,
            seed: a.seed,
            out: a.out,
        }),
        Command::Study(a) => commands::resolve_study(a.study, a.config.as_deref(), a.jobs, a.seeds, a.out),
        Command::Rerun(a) => manifest::load_invocation(&a.manifest, a.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    static LOGGER: StderrLogger = StderrLogger;
    let _ = log::set_logger(&LOGGER);
    log::set_max_level(if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn });

    match resolve(cli.command).and_then(commands::execute) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
