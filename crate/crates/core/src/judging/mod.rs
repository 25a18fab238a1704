//! Collecting judgments and questionnaires from jurors.
//!
//! [`JudgmentStore`] owns the durable state; [`router`] exposes it over
//! HTTP. Jurors only ever see [`JurorItem`](crate::pool::JurorItem)s.

mod export;
mod http;
mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Phase;

pub use export::{export_study, read_ranked_lists, read_questionnaires, ExportSummary, EXPORT_FILES};
pub use http::{router, serve, spawn_server, ServerHandle};
pub use store::{read_log, JudgmentStore, LogContents, Progress, LOG_FILE, SNAPSHOT_FILE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub pool_id: String,
    pub item_id: String,
    pub participant_id: String,
    pub binary: bool,
    pub graded: i64,
    pub judged_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    YesNo(bool),
    Integer(i64),
    Text(String),
}

impl Answer {
    /// Flat form used in CSV exports and segment predicates.
    pub fn render(&self) -> String {
        match self {
            Answer::YesNo(true) => "yes".to_string(),
            Answer::YesNo(false) => "no".to_string(),
            Answer::Integer(n) => n.to_string(),
            Answer::Text(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    pub participant_id: String,
    pub task_id: String,
    pub phase: Phase,
    pub answers: BTreeMap<String, Answer>,
    pub submitted_at: u64,
}

/// One line of the study log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Judgment(Judgment),
    Questionnaire(QuestionnaireResponse),
}

#[derive(Debug, Error)]
pub enum JudgingError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: corrupt record at byte {offset}: {message}")]
    Corrupt {
        path: PathBuf,
        offset: u64,
        message: String,
    },
}

impl JudgingError {
    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> JudgingError + '_ {
        move |source| JudgingError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
