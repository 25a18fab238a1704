//! Collecting the top-k results per (query, engine).
//!
//! Engines are reached through an [`EngineAdapter`]. The recorded-fixture
//! adapter replays stored result pages and is what tests and reproducible
//! runs use; the live adapter fetches a results page over HTTP and scrapes
//! it with a [`SelectorProfile`].

mod collect;
mod fixture;
mod html;
mod live;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AdapterKind, EngineSpec, StudyConfig};

pub use collect::{collect_all, collect_resuming, CollectError, CollectOutcome, JournalEntry, RequestStatus};
pub use fixture::{
    fetch_fixture, fixture_file_name, FixtureAdapter, FixtureStore, Recording, RecordedResult,
};
pub use html::{parse_serp_html, ParsedSerp, SelectorProfile, SerpItem};
pub use live::LiveAdapter;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerpResult {
    pub engine_id: String,
    pub query_text: String,
    pub rank: u32,
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub fetched_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionFailure {
    pub engine_id: String,
    pub query_text: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultBatch {
    pub study_id: String,
    pub results: Vec<SerpResult>,
    pub failures: Vec<CollectionFailure>,
}

impl ResultBatch {
    pub fn new(study_id: &str) -> Self {
        ResultBatch {
            study_id: study_id.to_string(),
            results: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// Results for one `(engine, query)` pair in rank order.
    pub fn list(&self, engine_id: &str, query_text: &str) -> Vec<&SerpResult> {
        let mut out: Vec<&SerpResult> = self
            .results
            .iter()
            .filter(|r| r.engine_id == engine_id && r.query_text == query_text)
            .collect();
        out.sort_by_key(|r| r.rank);
        out
    }

    /// Checks that every present `(engine, query)` pair has ranks `1..=m`
    /// with `m <= max_rank` and no repeats. Returns the offending pairs.
    pub fn rank_violations(&self, max_rank: u32) -> Vec<(String, String)> {
        use std::collections::BTreeMap;
        let mut ranks: BTreeMap<(&str, &str), Vec<u32>> = BTreeMap::new();
        for r in &self.results {
            ranks
                .entry((&r.engine_id, &r.query_text))
                .or_default()
                .push(r.rank);
        }
        ranks
            .into_iter()
            .filter_map(|(key, mut rs)| {
                rs.sort_unstable();
                let contiguous = rs.iter().enumerate().all(|(i, &r)| r == i as u32 + 1);
                (!contiguous || rs.len() as u32 > max_rank)
                    .then(|| (key.0.to_string(), key.1.to_string()))
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("no recording for query {0:?}")]
    NoRecording(String),
    #[error("recording for query {query:?} is corrupt: {reason}")]
    CorruptRecording { query: String, reason: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("profile mismatch: selector profile {profile} matched no result containers")]
    ProfileMismatch { profile: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid adapter setup: {0}")]
    Setup(String),
}

impl FetchError {
    /// Only transport failures can fix themselves on a retry.
    pub fn is_retryable(&self) -> bool {
        matches!(self, FetchError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 2,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            initial_backoff: Duration::ZERO,
        }
    }

    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff * 2u32.saturating_pow(retry)
    }
}

/// A source of ranked results for one engine.
pub trait EngineAdapter: Send + Sync {
    fn engine_id(&self) -> &str;

    /// Returns at most `k` results ranked `1..=m`.
    fn fetch(&self, query_text: &str, k: usize) -> Result<Vec<SerpResult>, FetchError>;

    /// Minimum spacing between the starts of two requests to this engine.
    fn min_interval(&self) -> Duration;

    fn retry_policy(&self) -> RetryPolicy;
}

fn interval_param(spec: &EngineSpec, default_ms: u64) -> Result<Duration, FetchError> {
    match spec.param("min_interval_ms") {
        None => Ok(Duration::from_millis(default_ms)),
        Some(v) => v.trim().parse::<u64>().map(Duration::from_millis).map_err(|_| {
            FetchError::Setup(format!(
                "engine {}: min_interval_ms {v:?} is not an integer",
                spec.engine_id
            ))
        }),
    }
}

/// Instantiates the adapter an engine spec names.
pub fn adapter_for(
    spec: &EngineSpec,
    config: &StudyConfig,
) -> Result<Box<dyn EngineAdapter>, FetchError> {
    let required = |key: &str| {
        spec.param(key).ok_or_else(|| {
            FetchError::Setup(format!("engine {} lacks param {key}", spec.engine_id))
        })
    };
    match spec.adapter {
        AdapterKind::RecordedFixture => {
            let dir = config.resolve_path(required("fixture_dir")?);
            Ok(Box::new(
                FixtureAdapter::new(&spec.engine_id, FixtureStore::new(dir))
                    .with_min_interval(interval_param(spec, 0)?),
            ))
        }
        AdapterKind::LiveScrape => {
            let profile_path = config.resolve_path(required("profile")?);
            let profile = SelectorProfile::load(&profile_path)?;
            let adapter = LiveAdapter::new(&spec.engine_id, required("endpoint")?, profile)?
                .with_min_interval(interval_param(spec, 2_000)?);
            Ok(Box::new(adapter))
        }
    }
}

pub(crate) fn now_millis() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
