use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EngineAdapter, FetchError, RetryPolicy, SerpResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedResult {
    pub rank: u32,
    pub url: String,
    pub title: String,
    pub snippet: String,
}

/// One stored results page. `results` are in rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recording {
    pub query_text: String,
    pub fetched_at: u64,
    pub results: Vec<RecordedResult>,
}

/// File name for a query's recording: a SHA-256 prefix of the trimmed text.
pub fn fixture_file_name(query_text: &str) -> String {
    let digest = Sha256::digest(query_text.trim().as_bytes());
    format!("{}.json", hex::encode(&digest[..16]))
}

/// A directory of recordings for one engine.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    root: PathBuf,
}

impl FixtureStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, query_text: &str) -> PathBuf {
        self.root.join(fixture_file_name(query_text))
    }

    pub fn write(&self, recording: &Recording) -> std::io::Result<PathBuf> {
        fs::create_dir_all(&self.root)?;
        let path = self.path_for(&recording.query_text);
        let mut text = serde_json::to_string_pretty(recording).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(&self, query_text: &str) -> Result<Recording, FetchError> {
        let path = self.path_for(query_text);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(FetchError::NoRecording(query_text.to_string()))
            }
            Err(source) => return Err(FetchError::Io { path, source }),
        };
        let recording: Recording =
            serde_json::from_slice(&bytes).map_err(|e| FetchError::CorruptRecording {
                query: query_text.to_string(),
                reason: e.to_string(),
            })?;
        if recording.query_text.trim() != query_text.trim() {
            // hash prefix collision or a misplaced file
            return Err(FetchError::NoRecording(query_text.to_string()));
        }
        Ok(recording)
    }
}

/// Replays the first `k` stored results for `query_text`.
pub fn fetch_fixture(
    engine_id: &str,
    query_text: &str,
    k: usize,
    store: &FixtureStore,
) -> Result<Vec<SerpResult>, FetchError> {
    let recording = store.read(query_text)?;
    for (i, r) in recording.results.iter().enumerate() {
        if r.rank != i as u32 + 1 {
            return Err(FetchError::CorruptRecording {
                query: query_text.to_string(),
                reason: format!("position {} holds rank {}", i + 1, r.rank),
            });
        }
        if r.url.is_empty() {
            return Err(FetchError::CorruptRecording {
                query: query_text.to_string(),
                reason: format!("rank {} has an empty url", r.rank),
            });
        }
    }
    Ok(recording
        .results
        .into_iter()
        .take(k)
        .map(|r| SerpResult {
            engine_id: engine_id.to_string(),
            query_text: query_text.to_string(),
            rank: r.rank,
            url: r.url,
            title: r.title,
            snippet: r.snippet,
            fetched_at: recording.fetched_at,
        })
        .collect())
}

pub struct FixtureAdapter {
    engine_id: String,
    store: FixtureStore,
    min_interval: Duration,
}

impl FixtureAdapter {
    pub fn new(engine_id: &str, store: FixtureStore) -> Self {
        FixtureAdapter {
            engine_id: engine_id.to_string(),
            store,
            min_interval: Duration::ZERO,
        }
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.min_interval = interval;
        self
    }
}

impl EngineAdapter for FixtureAdapter {
    fn engine_id(&self) -> &str {
        &self.engine_id
    }

    fn fetch(&self, query_text: &str, k: usize) -> Result<Vec<SerpResult>, FetchError> {
        fetch_fixture(&self.engine_id, query_text, k, &self.store)
    }

    fn min_interval(&self) -> Duration {
        self.min_interval
    }

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy::none()
    }
}
