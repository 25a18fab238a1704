//! The `postjudge` command line: one subcommand per pipeline stage plus
//! `simulate` and `pipeline`.

pub mod manifest;
pub mod simulate;
pub mod stages;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::{load_study_file, ConfigError, StudyConfig};
use crate::judging::JudgingError;
use crate::logs::LogError;
use crate::pool::PoolError;

pub use manifest::{PipelineManifest, Stage, MANIFEST_FILE};
pub use stages::{Context, StageReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("stale manifest: {artifact} does not match the digest recorded in {manifest}")]
    StaleManifest { artifact: PathBuf, manifest: PathBuf },
    #[error("{0}")]
    Stage(String),
    #[error("stage {stage} failed: {source}")]
    InStage {
        stage: &'static str,
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source: e,
        }
    }

    /// 1 for invalid input, 2 for a failing stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Log(_) => 1,
            CliError::Io { .. } | CliError::StaleManifest { .. } | CliError::Stage(_) => 2,
            CliError::InStage { source, .. } => source.exit_code(),
        }
    }

    fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ CliError::InStage { .. } => e,
            e => CliError::InStage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

impl From<PoolError> for CliError {
    fn from(e: PoolError) -> Self {
        match e {
            PoolError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Stage(other.to_string()),
        }
    }
}

impl From<JudgingError> for CliError {
    fn from(e: JudgingError) -> Self {
        match e {
            JudgingError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Stage(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "postjudge", version, about = "Search engine evaluation with relevance judgments collected after each session")]
pub struct Cli {
    /// Study config file.
    #[arg(long, global = true)]
    pub study: Option<PathBuf>,
    /// Root for stage output directories.
    #[arg(long, global = true, default_value = "work")]
    pub workdir: PathBuf,
    /// Overrides the study's shuffle seed; also seeds `simulate`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdapterArg {
    Fixture,
    Live,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse interaction logs into sessions.
    Ingest {
        /// Log file glob patterns.
        #[arg(long, required = true, num_args = 1..)]
        logs: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Tolerated fraction of malformed lines.
        #[arg(long, default_value_t = 0.0)]
        max_reject_rate: f64,
    },
    /// Fetch the top results for every session query from every engine.
    Collect {
        #[arg(long)]
        sessions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use this adapter for every engine instead of the configured one.
        #[arg(long, value_enum)]
        adapter: Option<AdapterArg>,
        /// Keep results already in the output batch and fetch only the rest.
        #[arg(long)]
        resume: bool,
    },
    /// Build one judgment pool per session.
    Pool {
        #[arg(long)]
        batch: Option<PathBuf>,
        #[arg(long)]
        sessions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the judging service until interrupted.
    Serve {
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Join stored judgments back to their provenance.
    Export {
        #[arg(long)]
        pools: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute effectiveness, distribution, overlap, and session statistics.
    Analyze {
        #[arg(long)]
        exports: Option<PathBuf>,
        #[arg(long)]
        sessions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// `all`, `complexity=simple|complex`, or `pre|post.<item>=<value>` (`!=` negates).
        #[arg(long, default_value = "all")]
        segment: String,
    },
    /// Generate synthetic logs, recorded result pages, and a judging script.
    Simulate {
        #[arg(long, default_value_t = 8)]
        participants: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ratio of click probabilities between consecutive ranks.
        #[arg(long, default_value_t = 0.5)]
        click_decay: f64,
    },
    /// Run ingest, collect, and pool; with `--resume`, export and analyze.
    Pipeline {
        #[arg(long, num_args = 1..)]
        logs: Vec<String>,
        #[arg(long)]
        resume: bool,
    },
}

fn expand_globs(patterns: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for pattern in patterns {
        let paths = glob::glob(pattern)
            .map_err(|e| CliError::Usage(format!("bad log pattern {pattern:?}: {e}")))?;
        let mut matched: Vec<PathBuf> = paths.filter_map(Result::ok).filter(|p| p.is_file()).collect();
        if matched.is_empty() {
            return Err(CliError::Usage(format!("no log files match {pattern:?}")));
        }
        files.append(&mut matched);
    }
    files.sort();
    files.dedup();
    Ok(files)
}

fn load_context(cli: &Cli) -> Result<Context, CliError> {
    let study = cli
        .study
        .clone()
        .ok_or_else(|| CliError::Usage("--study <path> is required".into()))?;
    let mut config: StudyConfig = load_study_file(&study)?;
    if let Some(seed) = cli.seed {
        config.shuffle_seed = seed;
    }
    Ok(Context {
        config,
        study_path: study,
        workdir: cli.workdir.clone(),
    })
}

fn print_report(report: &StageReport) {
    if report.skipped {
        println!("{}: up to date ({})", report.name, report.out_dir.display());
    } else {
        println!("{}: {} -> {}", report.name, report.summary, report.out_dir.display());
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = load_context(&cli)?;
    match cli.command {
        Command::Ingest {
            logs,
            out,
            max_reject_rate,
        } => {
            let files = expand_globs(&logs)?;
            let out = out.unwrap_or_else(|| ctx.dir("ingest"));
            print_report(&stages::ingest(&ctx, &files, &out, max_reject_rate)?);
        }
        Command::Collect {
            sessions,
            out,
            adapter,
            resume,
        } => {
            let sessions = sessions.unwrap_or_else(|| ctx.sessions_file());
            let out = out.unwrap_or_else(|| ctx.dir("collect"));
            print_report(&stages::collect(&ctx, &sessions, &out, adapter, resume)?);
        }
        Command::Pool { batch, sessions, out } => {
            let batch = batch.unwrap_or_else(|| ctx.dir("collect"));
            let sessions = sessions.unwrap_or_else(|| ctx.sessions_file());
            let out = out.unwrap_or_else(|| ctx.dir("pool"));
            print_report(&stages::pool(&ctx, &batch, &sessions, &out)?);
        }
        Command::Serve {
            pools,
            store,
            host,
            port,
        } => {
            let pools = pools.unwrap_or_else(|| ctx.dir("pool"));
            let store = store.unwrap_or_else(|| ctx.dir("store"));
            stages::serve(&ctx, &pools, &store, &host, port)?;
        }
        Command::Export { pools, store, out } => {
            let pools = pools.unwrap_or_else(|| ctx.dir("pool"));
            let store = store.unwrap_or_else(|| ctx.dir("store"));
            let out = out.unwrap_or_else(|| ctx.dir("export"));
            print_report(&stages::export(&ctx, &pools, &store, &out)?);
        }
        Command::Analyze {
            exports,
            sessions,
            out,
            segment,
        } => {
            let exports = exports.unwrap_or_else(|| ctx.dir("export"));
            let sessions = sessions.unwrap_or_else(|| ctx.sessions_file());
            let out = out.unwrap_or_else(|| ctx.dir("analysis"));
            print_report(&stages::analyze(&ctx, &exports, &sessions, &out, &segment)?);
        }
        Command::Simulate {
            participants,
            out,
            click_decay,
        } => {
            let opts = simulate::SimulateOptions {
                participants,
                seed: cli.seed.unwrap_or(ctx.config.shuffle_seed),
                click_decay,
            };
            let out = out.unwrap_or_else(|| ctx.dir("simulate"));
            let sim = simulate::simulate(&ctx.config, &opts)?;
            simulate::write_simulation(&sim, &out)?;
            println!(
                "simulate: {} participants, {} judgments scripted -> {}",
                sim.logs.len(),
                sim.judgments.len(),
                out.display()
            );
        }
        Command::Pipeline { logs, resume } => {
            if resume {
                for report in stages::pipeline_resume(&ctx)? {
                    print_report(&report);
                }
            } else {
                if logs.is_empty() {
                    return Err(CliError::Usage("pipeline needs --logs unless --resume is given".into()));
                }
                let files = expand_globs(&logs)?;
                for report in stages::pipeline_start(&ctx, &files)? {
                    print_report(&report);
                }
                println!(
                    "halted before judging: run `serve`, collect judgments, then `pipeline --resume`"
                );
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    main_with(std::env::args_os())
}
