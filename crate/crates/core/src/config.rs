//! Study design: engines, caps, judgment scales, tasks and questionnaires.
//!
//! A study is described by a single TOML file. Omitted caps fall back to
//! three queries per task and ten results per query. Loading always runs
//! [`validate_config`]; a config that comes back from the loader has no
//! violations.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{GainMode, TTestVariant};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_QUERIES: u32 = 3;
pub const DEFAULT_RESULTS_PER_QUERY: u32 = 10;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read study config: {0}")]
    Io(#[from] std::io::Error),
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid study config: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Stable identifiers for every invariant the validator checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    UnsupportedSchemaVersion,
    EmptyStudyId,
    EnginesEmpty,
    DuplicateEngineId,
    MissingAdapterParam,
    MaxQueriesZero,
    ResultsPerQueryZero,
    DuplicateTaskId,
    ScaleBoundsInverted,
    ScaleLabelMissing,
    ScaleLabelOutOfRange,
    DuplicateQuestionnaireItem,
    QuestionnairePhaseMismatch,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::UnsupportedSchemaVersion => "unsupported schema version",
            ViolationCode::EmptyStudyId => "study_id non-empty",
            ViolationCode::EnginesEmpty => "engines non-empty",
            ViolationCode::DuplicateEngineId => "engine ids unique",
            ViolationCode::MissingAdapterParam => "adapter params complete",
            ViolationCode::MaxQueriesZero => "max_queries_per_task >= 1",
            ViolationCode::ResultsPerQueryZero => "results_per_query >= 1",
            ViolationCode::DuplicateTaskId => "task ids unique",
            ViolationCode::ScaleBoundsInverted => "scale bounds inverted",
            ViolationCode::ScaleLabelMissing => "label for every scale point",
            ViolationCode::ScaleLabelOutOfRange => "scale labels within bounds",
            ViolationCode::DuplicateQuestionnaireItem => "questionnaire item ids unique per phase",
            ViolationCode::QuestionnairePhaseMismatch => "questionnaire item phase matches its list",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

impl Violation {
    fn new(code: ViolationCode, detail: impl Into<String>) -> Self {
        Violation {
            code,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.detail.is_empty() {
            write!(f, "{}", self.code)
        } else {
            write!(f, "{}: {}", self.code, self.detail)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    RecordedFixture,
    LiveScrape,
}

impl AdapterKind {
    pub fn required_params(self) -> &'static [&'static str] {
        match self {
            AdapterKind::RecordedFixture => &["fixture_dir"],
            AdapterKind::LiveScrape => &["endpoint", "profile"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineSpec {
    pub engine_id: String,
    pub adapter: AdapterKind,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl EngineSpec {
    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Complexity {
    Simple,
    Complex,
}

impl Complexity {
    pub fn as_str(self) -> &'static str {
        match self {
            Complexity::Simple => "simple",
            Complexity::Complex => "complex",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub description: String,
    pub complexity: Complexity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub binary_labels: (String, String),
    pub graded_min: i64,
    pub graded_max: i64,
    pub graded_labels: BTreeMap<i64, String>,
}

impl Default for ScaleSpec {
    fn default() -> Self {
        let labels = [
            "completely irrelevant",
            "irrelevant",
            "relevant",
            "highly relevant",
            "completely relevant",
        ];
        ScaleSpec {
            binary_labels: ("relevant".to_string(), "not relevant".to_string()),
            graded_min: 1,
            graded_max: 5,
            graded_labels: labels
                .iter()
                .enumerate()
                .map(|(i, l)| (i as i64 + 1, l.to_string()))
                .collect(),
        }
    }
}

impl ScaleSpec {
    pub fn contains(&self, point: i64) -> bool {
        (self.graded_min..=self.graded_max).contains(&point)
    }

    pub fn points(&self) -> impl Iterator<Item = i64> {
        self.graded_min..=self.graded_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pre,
    Post,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Post => "post",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "pre" => Some(Phase::Pre),
            "post" => Some(Phase::Post),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    YesNo,
    Integer,
    FreeText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireItem {
    pub item_id: String,
    pub prompt: String,
    pub answer_kind: AnswerKind,
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct AnalysisSpec {
    pub t_test: TTestVariant,
    pub gain: GainMode,
}

/// Free-text design metadata with no operational effect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct StudyMetadata {
    pub user_groups: Option<String>,
    pub timeframe: Option<String>,
    pub environment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub schema_version: u32,
    pub study_id: String,
    pub engines: Vec<EngineSpec>,
    pub max_queries_per_task: u32,
    pub results_per_query: u32,
    pub judgment_scales: ScaleSpec,
    pub tasks: Vec<TaskSpec>,
    pub pre_questionnaire: Vec<QuestionnaireItem>,
    pub post_questionnaire: Vec<QuestionnaireItem>,
    pub shuffle_seed: u64,
    pub analysis: AnalysisSpec,
    pub metadata: StudyMetadata,
    /// Directory relative paths in adapter params resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl StudyConfig {
    /// Upper bound on SERP-derived items in one pool.
    pub fn pool_ceiling(&self) -> u64 {
        u64::from(self.max_queries_per_task)
            * u64::from(self.results_per_query)
            * self.engines.len() as u64
    }

    pub fn engine(&self, engine_id: &str) -> Option<&EngineSpec> {
        self.engines.iter().find(|e| e.engine_id == engine_id)
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn questionnaire(&self, phase: Phase) -> &[QuestionnaireItem] {
        match phase {
            Phase::Pre => &self.pre_questionnaire,
            Phase::Post => &self.post_questionnaire,
        }
    }

    pub fn resolve_path(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    study_id: String,
    #[serde(default)]
    engines: Vec<EngineSpec>,
    max_queries_per_task: Option<u32>,
    results_per_query: Option<u32>,
    scale: Option<RawScale>,
    #[serde(default)]
    tasks: Vec<TaskSpec>,
    #[serde(default)]
    pre_questionnaire: Vec<RawQuestionnaireItem>,
    #[serde(default)]
    post_questionnaire: Vec<RawQuestionnaireItem>,
    #[serde(default)]
    shuffle_seed: u64,
    #[serde(default)]
    analysis: AnalysisSpec,
    #[serde(default)]
    metadata: StudyMetadata,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScale {
    binary_labels: Option<(String, String)>,
    graded_min: Option<i64>,
    graded_max: Option<i64>,
    graded_labels: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuestionnaireItem {
    item_id: String,
    prompt: String,
    answer_kind: AnswerKind,
    phase: Option<Phase>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

/// Parses and validates a study config from any reader.
pub fn load_study_config(mut source: impl Read) -> Result<StudyConfig, ConfigError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    parse_study_config(&text)
}

/// Like [`load_study_config`], additionally recording the file's directory
/// so relative fixture and profile paths resolve next to the config.
pub fn load_study_file(path: &Path) -> Result<StudyConfig, ConfigError> {
    let file = std::fs::File::open(path)?;
    let mut config = load_study_config(file)?;
    config.base_dir = Some(
        path.parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    );
    log::info!(
        "loaded study {} with pool ceiling {}",
        config.study_id,
        config.pool_ceiling()
    );
    Ok(config)
}

pub fn parse_study_config(text: &str) -> Result<StudyConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;

    let mut violations = Vec::new();
    let judgment_scales = build_scale(raw.scale, &mut violations);
    let pre_questionnaire = build_items(raw.pre_questionnaire, Phase::Pre, &mut violations);
    let post_questionnaire = build_items(raw.post_questionnaire, Phase::Post, &mut violations);

    let config = StudyConfig {
        schema_version: raw.schema_version,
        study_id: raw.study_id,
        engines: raw.engines,
        max_queries_per_task: raw.max_queries_per_task.unwrap_or(DEFAULT_MAX_QUERIES),
        results_per_query: raw.results_per_query.unwrap_or(DEFAULT_RESULTS_PER_QUERY),
        judgment_scales,
        tasks: raw.tasks,
        pre_questionnaire,
        post_questionnaire,
        shuffle_seed: raw.shuffle_seed,
        analysis: raw.analysis,
        metadata: raw.metadata,
        base_dir: None,
    };
    violations.extend(validate_config(&config));
    violations.sort();
    violations.dedup();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

fn build_scale(raw: Option<RawScale>, violations: &mut Vec<Violation>) -> ScaleSpec {
    let Some(raw) = raw else {
        return ScaleSpec::default();
    };
    let default = ScaleSpec::default();
    let graded_min = raw.graded_min.unwrap_or(default.graded_min);
    let graded_max = raw.graded_max.unwrap_or(default.graded_max);
    let graded_labels = match raw.graded_labels {
        Some(labels) => labels
            .into_iter()
            .filter_map(|(k, v)| match k.trim().parse::<i64>() {
                Ok(point) => Some((point, v)),
                Err(_) => {
                    violations.push(Violation::new(
                        ViolationCode::ScaleLabelOutOfRange,
                        format!("label key {k:?} is not an integer scale point"),
                    ));
                    None
                }
            })
            .collect(),
        None => default.graded_labels,
    };
    ScaleSpec {
        binary_labels: raw.binary_labels.unwrap_or(default.binary_labels),
        graded_min,
        graded_max,
        graded_labels,
    }
}

fn build_items(
    raw: Vec<RawQuestionnaireItem>,
    phase: Phase,
    violations: &mut Vec<Violation>,
) -> Vec<QuestionnaireItem> {
    raw.into_iter()
        .map(|item| {
            if let Some(declared) = item.phase {
                if declared != phase {
                    violations.push(Violation::new(
                        ViolationCode::QuestionnairePhaseMismatch,
                        format!(
                            "item {} declares phase {} inside the {} list",
                            item.item_id,
                            declared.as_str(),
                            phase.as_str()
                        ),
                    ));
                }
            }
            QuestionnaireItem {
                item_id: item.item_id,
                prompt: item.prompt,
                answer_kind: item.answer_kind,
                phase,
            }
        })
        .collect()
}

fn duplicates<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    let mut reported = HashSet::new();
    let mut out = Vec::new();
    for id in ids {
        if !seen.insert(id) && reported.insert(id) {
            out.push(id);
        }
    }
    out
}

/// Checks every study invariant. Violations are returned sorted by code,
/// each offending id reported once.
pub fn validate_config(config: &StudyConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if config.schema_version != SCHEMA_VERSION {
        out.push(Violation::new(
            ViolationCode::UnsupportedSchemaVersion,
            format!("found {}, expected {SCHEMA_VERSION}", config.schema_version),
        ));
    }
    if config.study_id.trim().is_empty() {
        out.push(Violation::new(ViolationCode::EmptyStudyId, ""));
    }
    if config.engines.is_empty() {
        out.push(Violation::new(ViolationCode::EnginesEmpty, ""));
    }
    for id in duplicates(config.engines.iter().map(|e| e.engine_id.as_str())) {
        out.push(Violation::new(ViolationCode::DuplicateEngineId, id));
    }
    for engine in &config.engines {
        for key in engine.adapter.required_params() {
            if engine.param(key).is_none() {
                out.push(Violation::new(
                    ViolationCode::MissingAdapterParam,
                    format!("engine {} lacks param {key}", engine.engine_id),
                ));
            }
        }
    }
    if config.max_queries_per_task == 0 {
        out.push(Violation::new(ViolationCode::MaxQueriesZero, ""));
    }
    if config.results_per_query == 0 {
        out.push(Violation::new(ViolationCode::ResultsPerQueryZero, ""));
    }
    for id in duplicates(config.tasks.iter().map(|t| t.task_id.as_str())) {
        out.push(Violation::new(ViolationCode::DuplicateTaskId, id));
    }

    let scale = &config.judgment_scales;
    if scale.graded_min >= scale.graded_max {
        out.push(Violation::new(
            ViolationCode::ScaleBoundsInverted,
            format!("graded_min {} >= graded_max {}", scale.graded_min, scale.graded_max),
        ));
    } else {
        let missing: Vec<String> = scale
            .points()
            .filter(|p| !scale.graded_labels.contains_key(p))
            .map(|p| p.to_string())
            .collect();
        if !missing.is_empty() {
            out.push(Violation::new(
                ViolationCode::ScaleLabelMissing,
                format!("no label for point(s) {}", missing.join(", ")),
            ));
        }
        let extra: Vec<String> = scale
            .graded_labels
            .keys()
            .filter(|p| !scale.contains(**p))
            .map(|p| p.to_string())
            .collect();
        if !extra.is_empty() {
            out.push(Violation::new(
                ViolationCode::ScaleLabelOutOfRange,
                format!("label(s) outside bounds: {}", extra.join(", ")),
            ));
        }
    }

    for phase in [Phase::Pre, Phase::Post] {
        let items = config.questionnaire(phase);
        for id in duplicates(items.iter().map(|i| i.item_id.as_str())) {
            out.push(Violation::new(
                ViolationCode::DuplicateQuestionnaireItem,
                format!("{} questionnaire item {id}", phase.as_str()),
            ));
        }
        for item in items.iter().filter(|i| i.phase != phase) {
            out.push(Violation::new(
                ViolationCode::QuestionnairePhaseMismatch,
                format!("item {} is not a {} item", item.item_id, phase.as_str()),
            ));
        }
    }
    out.sort();
    out
}
