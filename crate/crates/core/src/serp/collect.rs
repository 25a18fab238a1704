use std::collections::{HashMap, HashSet};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{now_millis, CollectionFailure, EngineAdapter, FetchError, ResultBatch, SerpResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RequestStatus {
    Ok { results: usize },
    Failed { reason: String, retryable: bool },
}

/// One request attempt against one engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub engine_id: String,
    pub query_text: String,
    pub attempt: u32,
    pub started_at: u64,
    /// Monotonic start time relative to the start of the run.
    pub start_offset_micros: u64,
    #[serde(flatten)]
    pub status: RequestStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectOutcome {
    pub batch: ResultBatch,
    pub journal: Vec<JournalEntry>,
}

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("every (query, engine) pair failed; first failure: {}", .0.first().map(|f| f.reason.as_str()).unwrap_or(""))]
    AllFailed(Vec<CollectionFailure>),
}

struct RateLimiter {
    min_interval: Duration,
    last_start: Option<Instant>,
}

impl RateLimiter {
    fn new(min_interval: Duration) -> Self {
        RateLimiter {
            min_interval,
            last_start: None,
        }
    }

    fn acquire(&mut self) -> Instant {
        if let Some(last) = self.last_start {
            let ready = last + self.min_interval;
            let now = Instant::now();
            if ready > now {
                thread::sleep(ready - now);
            }
        }
        let start = Instant::now();
        self.last_start = Some(start);
        start
    }
}

struct EngineRun {
    results: Vec<SerpResult>,
    failures: Vec<CollectionFailure>,
    journal: Vec<JournalEntry>,
}

fn validate(results: &[SerpResult], k: usize) -> Result<(), String> {
    if results.len() > k {
        return Err(format!("adapter returned {} results for k={k}", results.len()));
    }
    for (i, r) in results.iter().enumerate() {
        if r.rank != i as u32 + 1 {
            return Err(format!("adapter returned rank {} at position {}", r.rank, i + 1));
        }
        if r.url.is_empty() {
            return Err(format!("adapter returned an empty url at rank {}", r.rank));
        }
    }
    Ok(())
}

fn run_engine(
    adapter: &dyn EngineAdapter,
    queries: &[&str],
    k: usize,
    run_start: Instant,
) -> EngineRun {
    let mut limiter = RateLimiter::new(adapter.min_interval());
    let retry = adapter.retry_policy();
    let mut run = EngineRun {
        results: Vec::new(),
        failures: Vec::new(),
        journal: Vec::new(),
    };
    for &query in queries {
        let mut attempt = 0;
        loop {
            let started = limiter.acquire();
            let outcome: Result<Vec<SerpResult>, FetchError> = adapter.fetch(query, k);
            let mut entry = JournalEntry {
                engine_id: adapter.engine_id().to_string(),
                query_text: query.to_string(),
                attempt,
                started_at: now_millis(),
                start_offset_micros: started.duration_since(run_start).as_micros() as u64,
                status: RequestStatus::Ok { results: 0 },
            };
            let checked = outcome.map_err(|e| (e.to_string(), e.is_retryable())).and_then(|rs| {
                validate(&rs, k).map(|_| rs).map_err(|reason| (reason, false))
            });
            match checked {
                Ok(results) => {
                    entry.status = RequestStatus::Ok {
                        results: results.len(),
                    };
                    run.journal.push(entry);
                    run.results.extend(results);
                    break;
                }
                Err((reason, retryable)) => {
                    entry.status = RequestStatus::Failed {
                        reason: reason.clone(),
                        retryable,
                    };
                    run.journal.push(entry);
                    if retryable && attempt < retry.max_retries {
                        thread::sleep(retry.backoff(attempt));
                        attempt += 1;
                        continue;
                    }
                    log::warn!("{} / {query:?}: {reason}", adapter.engine_id());
                    run.failures.push(CollectionFailure {
                        engine_id: adapter.engine_id().to_string(),
                        query_text: query.to_string(),
                        reason,
                    });
                    break;
                }
            }
        }
    }
    run
}

/// Fetches the top `k` results of every query from every engine.
///
/// Engines run concurrently, each on its own thread; requests to one engine
/// are serialised and spaced by its declared minimum interval. Failed pairs
/// are recorded in the batch rather than aborting it.
pub fn collect_all(
    study_id: &str,
    queries: &[String],
    adapters: &[Box<dyn EngineAdapter>],
    k: usize,
) -> Result<CollectOutcome, CollectError> {
    collect_resuming(study_id, queries, adapters, k, None)
}

/// Like [`collect_all`], reusing pairs that already have results in
/// `previous` instead of requesting them again.
pub fn collect_resuming(
    study_id: &str,
    queries: &[String],
    adapters: &[Box<dyn EngineAdapter>],
    k: usize,
    previous: Option<&ResultBatch>,
) -> Result<CollectOutcome, CollectError> {
    let mut seen = HashSet::new();
    let queries: Vec<&str> = queries
        .iter()
        .map(String::as_str)
        .filter(|q| seen.insert(*q))
        .collect();

    let mut reused: HashMap<(&str, &str), Vec<SerpResult>> = HashMap::new();
    if let Some(prev) = previous {
        for r in &prev.results {
            reused
                .entry((r.engine_id.as_str(), r.query_text.as_str()))
                .or_default()
                .push(r.clone());
        }
    }

    let run_start = Instant::now();
    let runs: Vec<EngineRun> = thread::scope(|scope| {
        let handles: Vec<_> = adapters
            .iter()
            .map(|adapter| {
                let pending: Vec<&str> = queries
                    .iter()
                    .copied()
                    .filter(|q| !reused.contains_key(&(adapter.engine_id(), *q)))
                    .collect();
                scope.spawn(move || run_engine(adapter.as_ref(), &pending, k, run_start))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("collector thread panicked"))
            .collect()
    });

    let mut batch = ResultBatch::new(study_id);
    let mut journal = Vec::new();
    let mut attempted = 0usize;
    for (adapter, run) in adapters.iter().zip(runs) {
        let mut fresh: HashMap<&str, Vec<SerpResult>> = HashMap::new();
        for r in run.results {
            let key = queries
                .iter()
                .copied()
                .find(|q| *q == r.query_text)
                .expect("result for a requested query");
            fresh.entry(key).or_default().push(r);
        }
        for q in &queries {
            if let Some(mut rs) = reused.remove(&(adapter.engine_id(), *q)) {
                rs.sort_by_key(|r| r.rank);
                batch.results.extend(rs);
            } else {
                attempted += 1;
                batch.results.extend(fresh.remove(q).unwrap_or_default());
            }
        }
        batch.failures.extend(run.failures);
        journal.extend(run.journal);
    }
    if attempted > 0 && batch.failures.len() == attempted {
        return Err(CollectError::AllFailed(batch.failures));
    }
    Ok(CollectOutcome { batch, journal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::serp::RetryPolicy;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        id: String,
        failures_before_success: u32,
        calls: AtomicU32,
        mismatch: bool,
        interval: Duration,
    }

    impl Flaky {
        fn new(id: &str, failures: u32) -> Self {
            Flaky {
                id: id.into(),
                failures_before_success: failures,
                calls: AtomicU32::new(0),
                mismatch: false,
                interval: Duration::ZERO,
            }
        }
    }

    impl EngineAdapter for Flaky {
        fn engine_id(&self) -> &str {
            &self.id
        }

        fn fetch(&self, q: &str, k: usize) -> Result<Vec<SerpResult>, FetchError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if self.mismatch {
                return Err(FetchError::ProfileMismatch {
                    profile: "p".into(),
                });
            }
            if n < self.failures_before_success {
                return Err(FetchError::Transport("reset".into()));
            }
            Ok((1..=k as u32)
                .map(|rank| SerpResult {
                    engine_id: self.id.clone(),
                    query_text: q.into(),
                    rank,
                    url: format!("https://{}.example/{q}/{rank}", self.id),
                    title: String::new(),
                    snippet: String::new(),
                    fetched_at: 0,
                })
                .collect())
        }

        fn min_interval(&self) -> Duration {
            self.interval
        }

        fn retry_policy(&self) -> RetryPolicy {
            RetryPolicy {
                max_retries: 2,
                initial_backoff: Duration::from_millis(1),
            }
        }
    }

    fn qs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn transport_errors_are_retried_twice() {
        let adapters: Vec<Box<dyn EngineAdapter>> = vec![Box::new(Flaky::new("a", 2))];
        let out = collect_all("s", &qs(&["q"]), &adapters, 3).unwrap();
        assert_eq!(out.batch.results.len(), 3);
        assert_eq!(out.journal.len(), 3);
        assert_eq!(out.journal[2].attempt, 2);

        let adapters: Vec<Box<dyn EngineAdapter>> =
            vec![Box::new(Flaky::new("a", 3)), Box::new(Flaky::new("b", 0))];
        let out = collect_all("s", &qs(&["q"]), &adapters, 3).unwrap();
        assert_eq!(out.batch.failures.len(), 1);
        assert_eq!(out.batch.failures[0].engine_id, "a");
        assert_eq!(out.batch.results.len(), 3);
    }

    #[test]
    fn profile_mismatch_is_not_retried() {
        let mut bad = Flaky::new("a", 0);
        bad.mismatch = true;
        let adapters: Vec<Box<dyn EngineAdapter>> = vec![Box::new(bad), Box::new(Flaky::new("b", 0))];
        let out = collect_all("s", &qs(&["q"]), &adapters, 2).unwrap();
        assert_eq!(out.journal.iter().filter(|j| j.engine_id == "a").count(), 1);
    }

    #[test]
    fn total_failure_is_an_error() {
        let mut bad = Flaky::new("a", 0);
        bad.mismatch = true;
        let adapters: Vec<Box<dyn EngineAdapter>> = vec![Box::new(bad)];
        assert!(matches!(
            collect_all("s", &qs(&["q1", "q2"]), &adapters, 2),
            Err(CollectError::AllFailed(f)) if f.len() == 2
        ));
    }

    #[test]
    fn empty_query_list_is_vacuous_success() {
        let adapters: Vec<Box<dyn EngineAdapter>> = vec![Box::new(Flaky::new("a", 0))];
        let out = collect_all("s", &[], &adapters, 10).unwrap();
        assert!(out.batch.results.is_empty() && out.batch.failures.is_empty());
    }

    #[test]
    fn rate_limit_spaces_requests_per_engine() {
        let mut a = Flaky::new("a", 0);
        a.interval = Duration::from_millis(30);
        let adapters: Vec<Box<dyn EngineAdapter>> = vec![Box::new(a), Box::new(Flaky::new("b", 0))];
        let out = collect_all("s", &qs(&["q1", "q2", "q3"]), &adapters, 1).unwrap();
        let starts: Vec<u64> = out
            .journal
            .iter()
            .filter(|j| j.engine_id == "a")
            .map(|j| j.start_offset_micros)
            .collect();
        assert_eq!(starts.len(), 3);
        for w in starts.windows(2) {
            assert!(w[1] - w[0] >= 30_000, "{starts:?}");
        }
    }

    #[test]
    fn resume_skips_completed_pairs() {
        let adapters: Vec<Box<dyn EngineAdapter>> = vec![Box::new(Flaky::new("a", 0))];
        let first = collect_all("s", &qs(&["q1"]), &adapters, 2).unwrap();
        let out = collect_resuming("s", &qs(&["q1", "q2"]), &adapters, 2, Some(&first.batch)).unwrap();
        assert_eq!(out.journal.len(), 1);
        assert_eq!(out.journal[0].query_text, "q2");
        assert_eq!(out.batch.results.len(), 4);
        assert_eq!(out.batch.results[..2], first.batch.results[..]);
    }
}
