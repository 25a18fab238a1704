use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use super::manifest::{check_upstream, digest_inputs, finish_stage, is_current, Stage};
use super::{AdapterArg, CliError};
use crate::config::{AdapterKind, StudyConfig};
use crate::judging::{self, export_study, read_log, JudgmentStore, EXPORT_FILES, LOG_FILE};
use crate::logs::{build_sessions, extract_queries, parse_log_stream, LogError, Reject, SessionBuild};
use crate::metrics::report::{segment_report, write_report, AnalysisInput, Segment, TABLE_FILES};
use crate::pool::{build_pool, load_pools, load_tokens, write_pool, write_tokens, PoolError, TOKENS_FILE};
use crate::serp::{adapter_for, collect_resuming, EngineAdapter, ResultBatch};

pub const SESSIONS_FILE: &str = "sessions.json";
pub const REJECTS_FILE: &str = "rejects.jsonl";
pub const UNATTRIBUTED_FILE: &str = "unattributed.jsonl";
pub const BATCH_FILE: &str = "batch.json";
pub const JOURNAL_FILE: &str = "journal.jsonl";

/// Everything a stage needs besides its own arguments.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: StudyConfig,
    pub study_path: PathBuf,
    pub workdir: PathBuf,
}

impl Context {
    pub fn new(config: StudyConfig, study_path: impl Into<PathBuf>, workdir: impl Into<PathBuf>) -> Self {
        Context {
            config,
            study_path: study_path.into(),
            workdir: workdir.into(),
        }
    }

    pub fn dir(&self, stage: &str) -> PathBuf {
        self.workdir.join(stage)
    }

    pub fn sessions_file(&self) -> PathBuf {
        self.dir("ingest").join(SESSIONS_FILE)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub name: &'static str,
    pub out_dir: PathBuf,
    /// The stage found its manifest current and did nothing.
    pub skipped: bool,
    pub summary: String,
    pub warnings: Vec<String>,
}

impl StageReport {
    fn skipped(name: &'static str, out: &Path) -> Self {
        StageReport {
            name,
            out_dir: out.to_path_buf(),
            skipped: true,
            summary: String::new(),
            warnings: Vec::new(),
        }
    }

    fn done(name: &'static str, out: &Path, summary: String, warnings: Vec<String>) -> Self {
        StageReport {
            name,
            out_dir: out.to_path_buf(),
            skipped: false,
            summary,
            warnings,
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("stage outputs serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(&row).expect("stage outputs serialize"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_sessions(path: &Path) -> Result<SessionBuild, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Stage(format!("{}: not a sessions file: {e}", path.display())))
}

fn read_batch(path: &Path) -> Result<ResultBatch, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Stage(format!("{}: not a result batch: {e}", path.display())))
}

fn files_in(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    if dir.is_dir() {
        for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
            let path = entry.map_err(|e| CliError::io(dir, e))?.path();
            if path.is_file() {
                files.push(path);
            }
        }
    }
    files.sort();
    Ok(files)
}

fn with_params(
    mut inputs: BTreeMap<String, String>,
    params: &[(&str, String)],
) -> BTreeMap<String, String> {
    for (k, v) in params {
        inputs.insert(format!("param:{k}"), v.clone());
    }
    inputs
}

#[derive(Serialize)]
struct RejectRow<'a> {
    file: String,
    #[serde(flatten)]
    reject: &'a Reject,
}

/// Parses every log file and groups the events into sessions.
///
/// `max_reject_rate` applies to the combined line count of all files.
pub fn ingest(
    ctx: &Context,
    logs: &[PathBuf],
    out: &Path,
    max_reject_rate: f64,
) -> Result<StageReport, CliError> {
    let mut paths = vec![ctx.study_path.clone()];
    paths.extend(logs.iter().cloned());
    let inputs = with_params(digest_inputs(&paths)?, &[("max_reject_rate", max_reject_rate.to_string())]);
    if is_current(out, Stage::Ingested, &inputs) {
        return Ok(StageReport::skipped("ingest", out));
    }

    let mut events = Vec::new();
    let mut rejects = Vec::new();
    let mut lines = 0usize;
    for path in logs {
        let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        let parsed = parse_log_stream(BufReader::new(file), 1.0)?;
        lines += parsed.events.len() + parsed.rejects.len();
        events.extend(parsed.events);
        rejects.extend(parsed.rejects.into_iter().map(|r| (path.display().to_string(), r)));
    }
    if !rejects.is_empty() {
        let rate = rejects.len() as f64 / lines as f64;
        if rate > max_reject_rate {
            return Err(LogError::TooManyRejects {
                rate,
                threshold: max_reject_rate,
                count: rejects.len(),
                lines,
                first: rejects.iter().take(10).map(|(_, r)| r.clone()).collect(),
            }
            .into());
        }
    }
    let build = build_sessions(&events)?;

    create_dir(out)?;
    write_json(&out.join(SESSIONS_FILE), &build)?;
    write_jsonl(
        &out.join(REJECTS_FILE),
        rejects.iter().map(|(file, reject)| RejectRow {
            file: file.clone(),
            reject,
        }),
    )?;
    write_jsonl(&out.join(UNATTRIBUTED_FILE), &build.unattributed)?;
    finish_stage(
        out,
        &ctx.config.study_id,
        Stage::Ingested,
        inputs,
        &[SESSIONS_FILE.into(), REJECTS_FILE.into(), UNATTRIBUTED_FILE.into()],
    )?;
    let mut warnings = Vec::new();
    if !build.unattributed.is_empty() {
        warnings.push(format!("{} events fell outside every session", build.unattributed.len()));
    }
    Ok(StageReport::done(
        "ingest",
        out,
        format!("{} sessions from {} events, {} rejects", build.sessions.len(), events.len(), rejects.len()),
        warnings,
    ))
}

/// Distinct query texts of all sessions after truncation, in first
/// appearance order.
pub fn session_queries(config: &StudyConfig, build: &SessionBuild) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for s in &build.sessions {
        for q in extract_queries(s, config.max_queries_per_task as usize) {
            if seen.insert(q.query_text.clone()) {
                out.push(q.query_text);
            }
        }
    }
    out
}

/// Sends every session query to every engine.
pub fn collect(
    ctx: &Context,
    sessions: &Path,
    out: &Path,
    adapter: Option<AdapterArg>,
    resume: bool,
) -> Result<StageReport, CliError> {
    check_upstream(&[sessions.to_path_buf()])?;
    let mut config = ctx.config.clone();
    if let Some(a) = adapter {
        let kind = match a {
            AdapterArg::Fixture => AdapterKind::RecordedFixture,
            AdapterArg::Live => AdapterKind::LiveScrape,
        };
        for e in &mut config.engines {
            e.adapter = kind;
        }
    }
    let mut paths = vec![ctx.study_path.clone(), sessions.to_path_buf()];
    for e in &config.engines {
        if e.adapter == AdapterKind::RecordedFixture {
            if let Some(dir) = e.param("fixture_dir") {
                paths.extend(files_in(&config.resolve_path(dir))?);
            }
        }
    }
    let inputs = with_params(digest_inputs(&paths)?, &[("adapter", format!("{adapter:?}"))]);
    if is_current(out, Stage::Collected, &inputs) {
        return Ok(StageReport::skipped("collect", out));
    }

    let build = read_sessions(sessions)?;
    let queries = session_queries(&config, &build);
    let adapters = config
        .engines
        .iter()
        .map(|e| adapter_for(e, &config))
        .collect::<Result<Vec<Box<dyn EngineAdapter>>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let batch_path = out.join(BATCH_FILE);
    let previous = if resume && batch_path.exists() {
        Some(read_batch(&batch_path)?)
    } else {
        None
    };
    let outcome = collect_resuming(
        &config.study_id,
        &queries,
        &adapters,
        config.results_per_query as usize,
        previous.as_ref(),
    )
    .map_err(|e| CliError::Stage(e.to_string()))?;

    create_dir(out)?;
    write_json(&batch_path, &outcome.batch)?;
    write_jsonl(&out.join(JOURNAL_FILE), &outcome.journal)?;
    finish_stage(
        out,
        &config.study_id,
        Stage::Collected,
        inputs,
        &[BATCH_FILE.into(), JOURNAL_FILE.into()],
    )?;
    let warnings = outcome
        .batch
        .failures
        .iter()
        .map(|f| format!("{} {:?}: {}", f.engine_id, f.query_text, f.reason))
        .collect();
    Ok(StageReport::done(
        "collect",
        out,
        format!(
            "{} results for {} queries, {} failed requests",
            outcome.batch.results.len(),
            queries.len(),
            outcome.batch.failures.len()
        ),
        warnings,
    ))
}

/// Builds one pool per session and issues juror tokens.
///
/// Existing tokens in `out` are kept so a rerun does not lock jurors out.
pub fn pool(ctx: &Context, batch_dir: &Path, sessions: &Path, out: &Path) -> Result<StageReport, CliError> {
    let batch_path = batch_dir.join(BATCH_FILE);
    check_upstream(&[batch_path.clone(), sessions.to_path_buf()])?;
    let paths = vec![ctx.study_path.clone(), batch_path.clone(), sessions.to_path_buf()];
    let inputs = with_params(digest_inputs(&paths)?, &[("shuffle_seed", ctx.config.shuffle_seed.to_string())]);
    if is_current(out, Stage::Pooled, &inputs) {
        return Ok(StageReport::skipped("pool", out));
    }

    let batch = read_batch(&batch_path)?;
    let build = read_sessions(sessions)?;
    create_dir(out)?;
    for old in files_in(out)? {
        let name = old.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(".json") && name != TOKENS_FILE && name != super::MANIFEST_FILE {
            fs::remove_file(&old).map_err(|e| CliError::io(&old, e))?;
        }
    }

    let mut warnings = Vec::new();
    let mut outputs = Vec::new();
    let mut participants = Vec::new();
    let mut items = 0usize;
    for session in &build.sessions {
        match build_pool(&batch, session, &ctx.config) {
            Ok(outcome) => {
                warnings.extend(outcome.warnings);
                write_pool(out, &outcome.pool)?;
                outputs.push(outcome.pool.file_name());
                items += outcome.pool.items.len();
                participants.push(session.participant_id.clone());
            }
            Err(e @ PoolError::EmptyPool { .. }) => warnings.push(e.to_string()),
            Err(e) => return Err(e.into()),
        }
    }
    let mut tokens = load_tokens(out)?;
    tokens.issue(participants.iter().map(String::as_str), &mut rand::rng());
    write_tokens(out, &tokens)?;
    outputs.push(TOKENS_FILE.to_string());
    finish_stage(out, &ctx.config.study_id, Stage::Pooled, inputs, &outputs)?;
    Ok(StageReport::done(
        "pool",
        out,
        format!("{} pools, {items} items", outputs.len() - 1),
        warnings,
    ))
}

fn pool_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    Ok(files_in(dir)?
        .into_iter()
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json") && name != super::MANIFEST_FILE && name != TOKENS_FILE
        })
        .collect())
}

pub fn open_store(ctx: &Context, pools_dir: &Path, store_dir: &Path) -> Result<JudgmentStore, CliError> {
    check_upstream(&pool_files(pools_dir)?)?;
    let pools = load_pools(pools_dir)?;
    create_dir(store_dir)?;
    Ok(JudgmentStore::open(store_dir, ctx.config.clone(), pools)?)
}

/// Serves the judging API until ctrl-c or SIGTERM.
pub fn serve(ctx: &Context, pools_dir: &Path, store_dir: &Path, host: &str, port: u16) -> Result<(), CliError> {
    let store = Arc::new(open_store(ctx, pools_dir, store_dir)?);
    let tokens = load_tokens(pools_dir)?;
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| CliError::Usage(format!("bad listen address {host}:{port}: {e}")))?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Stage(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Stage(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Stage(e.to_string()))?;
        println!("listening on http://{local}");
        use std::io::Write;
        let _ = std::io::stdout().flush();
        judging::serve(store, tokens, listener, shutdown_signal())
            .await
            .map_err(|e| CliError::Stage(format!("server failed: {e}")))
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Writes the export files from the study log and the pools.
pub fn export(ctx: &Context, pools_dir: &Path, store_dir: &Path, out: &Path) -> Result<StageReport, CliError> {
    let pool_paths = pool_files(pools_dir)?;
    check_upstream(&pool_paths)?;
    let log_path = store_dir.join(LOG_FILE);
    let mut paths = vec![ctx.study_path.clone()];
    paths.extend(pool_paths);
    if log_path.exists() {
        paths.push(log_path.clone());
    }
    let inputs = digest_inputs(&paths)?;
    if is_current(out, Stage::Exported, &inputs) {
        return Ok(StageReport::skipped("export", out));
    }

    let pools = load_pools(pools_dir)?;
    let log = if log_path.exists() {
        read_log(&log_path)?
    } else {
        judging::LogContents::default()
    };
    let mut warnings = Vec::new();
    if log.torn_bytes > 0 {
        warnings.push(format!("ignored {} bytes of an unfinished record at the end of the log", log.torn_bytes));
    }
    let summary = export_study(&pools, &log, out)?;
    let outputs: Vec<String> = EXPORT_FILES.iter().map(|s| s.to_string()).collect();
    finish_stage(out, &ctx.config.study_id, Stage::Exported, inputs, &outputs)?;
    Ok(StageReport::done(
        "export",
        out,
        format!(
            "{} judgments, {} engine rows, {} questionnaire rows, {} ranked lists",
            summary.judgments, summary.engine_rows, summary.questionnaire_rows, summary.ranked_lists
        ),
        warnings,
    ))
}

/// Computes the report for one segment and writes it with its tables.
pub fn analyze(
    ctx: &Context,
    exports: &Path,
    sessions: &Path,
    out: &Path,
    segment: &str,
) -> Result<StageReport, CliError> {
    let segment = Segment::parse(segment).map_err(CliError::Usage)?;
    let lists_path = exports.join("ranked_lists.jsonl");
    let answers_path = exports.join("questionnaires.csv");
    let paths = vec![ctx.study_path.clone(), lists_path.clone(), answers_path.clone(), sessions.to_path_buf()];
    check_upstream(&paths[1..])?;
    let inputs = with_params(digest_inputs(&paths)?, &[("segment", segment.to_string())]);
    if is_current(out, Stage::Analyzed, &inputs) {
        return Ok(StageReport::skipped("analyze", out));
    }

    let lists = judging::read_ranked_lists(&lists_path)?;
    let answers = judging::read_questionnaires(&answers_path)?;
    let build = read_sessions(sessions)?;
    let report = segment_report(
        &AnalysisInput {
            config: &ctx.config,
            lists: &lists,
            sessions: &build.sessions,
            answers: &answers,
        },
        &segment,
    );
    create_dir(out)?;
    write_report(&report, out).map_err(|e| CliError::io(out, e))?;
    let outputs: Vec<String> = TABLE_FILES.iter().map(|s| s.to_string()).collect();
    finish_stage(out, &ctx.config.study_id, Stage::Analyzed, inputs, &outputs)?;
    Ok(StageReport::done(
        "analyze",
        out,
        format!("{} lists, {} engines, segment {}", report.lists, report.engines.len(), report.segment),
        Vec::new(),
    ))
}

/// Ingest, collect with the configured adapters, and pool.
pub fn pipeline_start(ctx: &Context, logs: &[PathBuf]) -> Result<Vec<StageReport>, CliError> {
    let sessions = ctx.sessions_file();
    Ok(vec![
        ingest(ctx, logs, &ctx.dir("ingest"), 0.0).map_err(|e| e.in_stage("ingest"))?,
        collect(ctx, &sessions, &ctx.dir("collect"), None, false).map_err(|e| e.in_stage("collect"))?,
        pool(ctx, &ctx.dir("collect"), &sessions, &ctx.dir("pool")).map_err(|e| e.in_stage("pool"))?,
    ])
}

/// Export the judging store and analyze the whole study.
pub fn pipeline_resume(ctx: &Context) -> Result<Vec<StageReport>, CliError> {
    Ok(vec![
        export(ctx, &ctx.dir("pool"), &ctx.dir("store"), &ctx.dir("export")).map_err(|e| e.in_stage("export"))?,
        analyze(ctx, &ctx.dir("export"), &ctx.sessions_file(), &ctx.dir("analysis"), "all")
            .map_err(|e| e.in_stage("analyze"))?,
    ])
}
