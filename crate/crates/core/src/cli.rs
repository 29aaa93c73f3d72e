//! Command-line front end. Exit codes: 0 success, 2 usage or configuration
//! error, 3 numeric fault, 1 anything else (I/O failure, internal error).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{analyze_curves, analyze_pca};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::training::{resume_run, run_all_seeds};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "memplay", version, about = "Memory-augmented asymmetric self-play")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every configured seed.
    Train(TrainArgs),
    /// Continue a run from its checkpoint file.
    Resume { checkpoint: PathBuf },
    /// Aggregate finished runs.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub memory_variant: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub total_episodes: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub interleave_n: Option<usize>,
    /// Output root; runs land in `<out>/<strategy>/seed_<seed>`.
    #[arg(long, env = "SELFPLAY_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub parallel_seeds: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AnalysisKind {
    Curves,
    Pca,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum)]
    pub kind: AnalysisKind,
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Summary-table row spacing in episodes.
    #[arg(long, default_value_t = 100_000)]
    pub sample_every: u64,
    /// PCA: subsample each segments file to at most this many episodes.
    #[arg(long)]
    pub max_episodes: Option<usize>,
    /// PCA: fit one embedding per strategy instead of a shared one.
    #[arg(long)]
    pub per_strategy_fit: bool,
}

/// Resolves the configuration of a `train` invocation: file over per-environment
/// defaults, then flags over the file.
pub fn resolve_config(args: &TrainArgs) -> Result<RunConfig> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::from_toml(&text, args.env.as_deref())?;
    if let Some(s) = &args.strategy {
        cfg.train.strategy = s.clone();
    }
    if let Some(v) = &args.memory_variant {
        cfg.memory.variant = v.clone();
    }
    if let Some(s) = &args.seeds {
        cfg.train.seeds = s.clone();
    }
    if let Some(n) = args.total_episodes {
        cfg.train.total_episodes = n;
    }
    if let Some(n) = args.batch_size {
        cfg.train.batch_size = n;
    }
    if let Some(n) = args.interleave_n {
        cfg.train.interleave_n = n;
    }
    if let Some(out) = &args.out {
        cfg.run.out = out.to_string_lossy().into_owned();
    }
    if let Some(n) = args.parallel_seeds {
        cfg.run.parallel_seeds = n;
    }
    if let Some(n) = args.checkpoint_every {
        cfg.run.checkpoint_every = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NumericFault { .. } => EXIT_NUMERIC,
        Error::Config(_) | Error::UnknownName { .. } | Error::Checkpoint { .. } | Error::Csv { .. } => EXIT_USAGE,
        Error::Contract(_) | Error::Io { .. } => EXIT_FAILURE,
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = resolve_config(&args)?;
            let out = PathBuf::from(&cfg.run.out);
            let summaries = run_all_seeds(&cfg, &out).map_err(|e| {
                if let Error::Io { .. } = e {
                    eprintln!("partial results are under {}", out.display());
                }
                e
            })?;
            for s in summaries {
                println!(
                    "seed {}: {} target / {} self-play episodes, final running avg {:.4} ({})",
                    s.seed,
                    s.target_episodes,
                    s.selfplay_episodes,
                    s.final_running_avg,
                    s.dir.display()
                );
            }
        }
        Command::Resume { checkpoint } => {
            let s = resume_run(&checkpoint)?;
            println!(
                "seed {}: resumed to {} target episodes, final running avg {:.4}",
                s.seed, s.target_episodes, s.final_running_avg
            );
        }
        Command::Analyze(a) => {
            let text = match a.kind {
                AnalysisKind::Curves => analyze_curves(&a.dirs, &a.out, a.sample_every)?,
                AnalysisKind::Pca => analyze_pca(&a.dirs, &a.out, a.max_episodes, a.per_strategy_fit)?,
            };
            print!("{text}");
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
