//! Python bindings for `postjudge`.
//!
//! Structured results cross the boundary as plain dicts and lists built
//! from the crate's serde representations.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use postjudge::cli::simulate::{simulate as run_simulation, write_simulation, SimulateOptions};
use postjudge::cli::{stages, CliError, Context, StageReport};
use postjudge::config::{load_study_file, parse_study_config, StudyConfig};
use postjudge::judging::{spawn_server, ServerHandle};
use postjudge::logs::{build_sessions as group_sessions, parse_log_stream};
use postjudge::metrics::{
    self, average_precision_at_k, dcg_at_k, descriptive_stats as describe, ndcg_at_k_with,
    precision_at_k, GainMode, JudgedEntry, RankedJudgedList, TTestVariant,
};
use postjudge::pool::{self, load_tokens};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(pypostjudge, PostjudgeError, PyException);

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PostjudgeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn err(e: impl std::fmt::Display) -> PyErr {
    PostjudgeError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Usage(_) | CliError::Config(_) | CliError::Log(_) => value_err(e),
        other => err(other),
    }
}

#[derive(Serialize)]
struct ReportView<'a> {
    stage: &'a str,
    out_dir: String,
    skipped: bool,
    summary: &'a str,
    warnings: &'a [String],
}

fn reports<'py>(py: Python<'py>, reports: &[StageReport]) -> PyResult<Bound<'py, PyAny>> {
    let views: Vec<ReportView<'_>> = reports
        .iter()
        .map(|r| ReportView {
            stage: r.name,
            out_dir: r.out_dir.display().to_string(),
            skipped: r.skipped,
            summary: &r.summary,
            warnings: &r.warnings,
        })
        .collect();
    to_py(py, &views)
}

/// A validated study configuration.
#[pyclass(frozen, module = "pypostjudge")]
struct Study {
    config: StudyConfig,
    path: Option<PathBuf>,
}

#[pymethods]
impl Study {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Study> {
        let config = load_study_file(&path).map_err(value_err)?;
        Ok(Study {
            config,
            path: Some(path),
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Study> {
        let config = parse_study_config(text).map_err(value_err)?;
        Ok(Study { config, path: None })
    }

    /// File the study was loaded from, if any.
    #[getter]
    fn path(&self) -> Option<PathBuf> {
        self.path.clone()
    }

    #[getter]
    fn study_id(&self) -> &str {
        &self.config.study_id
    }

    #[getter]
    fn engines(&self) -> Vec<String> {
        self.config.engines.iter().map(|e| e.engine_id.clone()).collect()
    }

    #[getter]
    fn tasks(&self) -> Vec<String> {
        self.config.tasks.iter().map(|t| t.task_id.clone()).collect()
    }

    #[getter]
    fn shuffle_seed(&self) -> u64 {
        self.config.shuffle_seed
    }

    #[getter]
    fn pool_ceiling(&self) -> u64 {
        self.config.pool_ceiling()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.config)
    }

    fn __repr__(&self) -> String {
        format!(
            "Study(study_id={:?}, engines={:?}, tasks={})",
            self.config.study_id,
            self.engines(),
            self.config.tasks.len()
        )
    }
}

/// A judging service running on a background thread.
#[pyclass(frozen, module = "pypostjudge")]
struct Server {
    base_url: String,
    handle: Mutex<Option<ServerHandle>>,
}

#[pymethods]
impl Server {
    #[getter]
    fn base_url(&self) -> &str {
        &self.base_url
    }

    fn stop(&self, py: Python<'_>) -> PyResult<()> {
        let handle = self.handle.lock().unwrap().take();
        match handle {
            Some(h) => py.detach(|| h.stop()).map_err(err),
            None => Ok(()),
        }
    }

    fn __enter__(slf: Py<Self>) -> Py<Self> {
        slf
    }

    fn __exit__(
        &self,
        py: Python<'_>,
        _exc_type: Option<Bound<'_, PyAny>>,
        _exc: Option<Bound<'_, PyAny>>,
        _tb: Option<Bound<'_, PyAny>>,
    ) -> PyResult<bool> {
        self.stop(py)?;
        Ok(false)
    }
}

/// Stage runner over one study and working directory.
#[pyclass(frozen, module = "pypostjudge")]
struct Pipeline {
    ctx: Context,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (study, workdir, seed=None))]
    fn new(study: PathBuf, workdir: PathBuf, seed: Option<u64>) -> PyResult<Pipeline> {
        let mut config = load_study_file(&study).map_err(value_err)?;
        if let Some(s) = seed {
            config.shuffle_seed = s;
        }
        Ok(Pipeline {
            ctx: Context::new(config, &study, workdir),
        })
    }

    /// Directory a stage writes to by default.
    fn stage_dir(&self, stage: &str) -> PathBuf {
        self.ctx.dir(stage)
    }

    /// Runs ingest, collect and pool over the given log files.
    fn start<'py>(&self, py: Python<'py>, logs: Vec<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
        let done = py.detach(|| stages::pipeline_start(&self.ctx, &logs)).map_err(cli_err)?;
        reports(py, &done)
    }

    /// Runs export and analyze once judging is finished.
    fn resume<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let done = py.detach(|| stages::pipeline_resume(&self.ctx)).map_err(cli_err)?;
        reports(py, &done)
    }

    #[pyo3(signature = (segment="all"))]
    fn analyze<'py>(&self, py: Python<'py>, segment: &str) -> PyResult<Bound<'py, PyAny>> {
        let out = match segment {
            "all" => self.ctx.dir("analysis"),
            s => self.ctx.dir("analysis").join(s.replace(['=', '!', '.'], "_")),
        };
        let report = py
            .detach(|| {
                stages::analyze(
                    &self.ctx,
                    &self.ctx.dir("export"),
                    &self.ctx.sessions_file(),
                    &out,
                    segment,
                )
            })
            .map_err(cli_err)?;
        reports(py, &[report])
    }

    /// The researcher token and one token per participant.
    fn tokens<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let tokens = load_tokens(&self.ctx.dir("pool")).map_err(err)?;
        to_py(py, &tokens)
    }

    /// Pools with full provenance, as written by the pool stage.
    fn pools<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let pools = pool::load_pools(&self.ctx.dir("pool")).map_err(err)?;
        to_py(py, &pools)
    }

    #[pyo3(signature = (host="127.0.0.1", port=0))]
    fn serve(&self, py: Python<'_>, host: &str, port: u16) -> PyResult<Server> {
        let addr = format!("{host}:{port}")
            .parse()
            .map_err(|e| value_err(format!("bad address {host}:{port}: {e}")))?;
        let handle = py
            .detach(|| -> Result<ServerHandle, PyErr> {
                let store = stages::open_store(&self.ctx, &self.ctx.dir("pool"), &self.ctx.dir("store"))
                    .map_err(cli_err)?;
                let tokens = load_tokens(&self.ctx.dir("pool")).map_err(err)?;
                spawn_server(Arc::new(store), tokens, addr).map_err(err)
            })?;
        Ok(Server {
            base_url: handle.base_url(),
            handle: Mutex::new(Some(handle)),
        })
    }
}

/// Writes synthetic logs, recorded result pages and a judging script.
#[pyfunction]
#[pyo3(signature = (study, out, participants=8, seed=None, click_decay=0.5))]
fn simulate<'py>(
    py: Python<'py>,
    study: &Study,
    out: PathBuf,
    participants: usize,
    seed: Option<u64>,
    click_decay: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = SimulateOptions {
        participants,
        seed: seed.unwrap_or(study.config.shuffle_seed),
        click_decay,
    };
    let sim = py
        .detach(|| {
            let sim = run_simulation(&study.config, &opts)?;
            write_simulation(&sim, &out)?;
            Ok::<_, CliError>(sim)
        })
        .map_err(cli_err)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        participants: Vec<&'a str>,
        engines: Vec<&'a str>,
        scripted_judgments: usize,
        questionnaires: usize,
    }
    to_py(
        py,
        &Summary {
            participants: sim.logs.keys().map(String::as_str).collect(),
            engines: sim.fixtures.keys().map(String::as_str).collect(),
            scripted_judgments: sim.judgments.len(),
            questionnaires: sim.questionnaires.len(),
        },
    )
}

#[pyfunction]
fn normalize_url(url: &str) -> PyResult<String> {
    pool::normalize_url(url).map_err(value_err)
}

/// Parses JSONL interaction-log text into events and rejected lines.
#[pyfunction]
#[pyo3(signature = (text, max_reject_rate=0.0))]
fn parse_log<'py>(py: Python<'py>, text: &str, max_reject_rate: f64) -> PyResult<Bound<'py, PyAny>> {
    let parsed = parse_log_stream(text.as_bytes(), max_reject_rate).map_err(value_err)?;
    to_py(py, &parsed)
}

/// Parses log text and groups its events into task sessions.
#[pyfunction]
fn build_sessions<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let parsed = parse_log_stream(text.as_bytes(), 1.0).map_err(value_err)?;
    let build = group_sessions(&parsed.events).map_err(value_err)?;
    to_py(py, &build)
}

fn list_of(binary: Option<Vec<Option<bool>>>, graded: Option<Vec<Option<i64>>>) -> PyResult<RankedJudgedList> {
    let n = binary.as_ref().map_or(0, Vec::len).max(graded.as_ref().map_or(0, Vec::len));
    if let (Some(b), Some(g)) = (&binary, &graded) {
        if b.len() != g.len() {
            return Err(value_err("binary and graded lists differ in length"));
        }
    }
    let mut list = RankedJudgedList::new("", "");
    list.entries = (0..n)
        .map(|i| JudgedEntry {
            rank: i as u32 + 1,
            binary: binary.as_ref().and_then(|b| b[i]),
            graded: graded.as_ref().and_then(|g| g[i]),
            was_clicked: false,
            url: String::new(),
            item_id: String::new(),
        })
        .collect();
    Ok(list)
}

fn check_k(k: usize) -> PyResult<usize> {
    if k == 0 {
        Err(value_err("k must be at least 1"))
    } else {
        Ok(k)
    }
}

fn gain_mode(name: &str) -> PyResult<GainMode> {
    match name {
        "linear" => Ok(GainMode::Linear),
        "exponential" => Ok(GainMode::Exponential),
        other => Err(value_err(format!("unknown gain mode {other:?}"))),
    }
}

/// Precision at `k` of a ranked list of binary judgments (`None` = unjudged).
#[pyfunction]
fn precision_at(binary: Vec<Option<bool>>, k: usize) -> PyResult<f64> {
    Ok(precision_at_k(&list_of(Some(binary), None)?, check_k(k)?))
}

#[pyfunction]
fn average_precision_at(binary: Vec<Option<bool>>, k: usize) -> PyResult<f64> {
    Ok(average_precision_at_k(&list_of(Some(binary), None)?, check_k(k)?))
}

#[pyfunction]
#[pyo3(signature = (graded, k, scale_min=1, gain="linear"))]
fn dcg_at(graded: Vec<Option<i64>>, k: usize, scale_min: i64, gain: &str) -> PyResult<f64> {
    Ok(dcg_at_k(&list_of(None, Some(graded))?, check_k(k)?, gain_mode(gain)?, scale_min))
}

#[pyfunction]
#[pyo3(signature = (graded, k, scale_min=1, gain="linear"))]
fn ndcg_at(graded: Vec<Option<i64>>, k: usize, scale_min: i64, gain: &str) -> PyResult<f64> {
    Ok(ndcg_at_k_with(&list_of(None, Some(graded))?, check_k(k)?, gain_mode(gain)?, scale_min))
}

/// Two-sample t-test; `variant` is `pooled`, `welch` or `paired`.
#[pyfunction]
#[pyo3(signature = (xs, ys, variant="pooled"))]
fn t_test<'py>(py: Python<'py>, xs: Vec<f64>, ys: Vec<f64>, variant: &str) -> PyResult<Bound<'py, PyAny>> {
    let variant =
        TTestVariant::parse(variant).ok_or_else(|| value_err(format!("unknown t-test variant {variant:?}")))?;
    let result = metrics::t_test_two_sample(&xs, &ys, variant).map_err(value_err)?;
    to_py(py, &result)
}

#[pyfunction]
fn student_t_p(t: f64, df: f64) -> f64 {
    metrics::student_t_two_tailed(t, df)
}

#[pyfunction]
fn descriptive_stats<'py>(py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &describe(&values).map_err(value_err)?)
}

#[pymodule]
fn pypostjudge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PostjudgeError", m.py().get_type::<PostjudgeError>())?;
    m.add_class::<Study>()?;
    m.add_class::<Pipeline>()?;
    m.add_class::<Server>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_url, m)?)?;
    m.add_function(wrap_pyfunction!(parse_log, m)?)?;
    m.add_function(wrap_pyfunction!(build_sessions, m)?)?;
    m.add_function(wrap_pyfunction!(precision_at, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision_at, m)?)?;
    m.add_function(wrap_pyfunction!(dcg_at, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at, m)?)?;
    m.add_function(wrap_pyfunction!(t_test, m)?)?;
    m.add_function(wrap_pyfunction!(student_t_p, m)?)?;
    m.add_function(wrap_pyfunction!(descriptive_stats, m)?)?;
    Ok(())
}
