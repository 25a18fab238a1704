use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use postjudge::config::load_study_file;
use postjudge::serp::{
    collect_all, parse_serp_html, EngineAdapter, FetchError, LiveAdapter, RetryPolicy, SelectorProfile,
};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(rel)
}

fn page(name: &str) -> String {
    std::fs::read_to_string(data(&format!("serp/{name}"))).unwrap()
}

#[test]
fn example_study_loads() {
    let config = load_study_file(&data("study.toml")).unwrap();
    assert_eq!(config.study_id, "example");
    assert_eq!(config.engines.len(), 2);
    assert_eq!(config.pool_ceiling(), 60);
}

#[test]
fn classic_page_yields_ten_organic_results() {
    let profile = SelectorProfile::load(&data("profiles/classic.toml")).unwrap();
    let parsed = parse_serp_html(&page("classic.html"), &profile, None).unwrap();
    assert_eq!(parsed.items.len(), 10);
    assert_eq!(parsed.excluded, 3);
    for (i, item) in parsed.items.iter().enumerate() {
        let n = i + 1;
        assert_eq!(item.url, format!("https://site{n}.example/mozart/{n}"));
        assert_eq!(item.title, format!("Mozart page {n}"));
        assert_eq!(item.snippet, format!("Snippet number {n} about Salzburg."));
    }
}

#[test]
fn list_page_resolves_against_base_and_drops_ads() {
    let profile = SelectorProfile::load(&data("profiles/list.toml")).unwrap();
    let parsed = parse_serp_html(&page("list.html"), &profile, Some("https://elsewhere.example/search")).unwrap();
    assert_eq!(parsed.items.len(), 10);
    assert!(parsed.excluded >= 1);
    for (i, item) in parsed.items.iter().enumerate() {
        assert_eq!(item.url, format!("https://results.example/redirect?u=site{}", i + 1));
        assert!(!item.url.contains("ad"));
    }
}

#[test]
fn wrong_profile_is_a_mismatch() {
    let profile = SelectorProfile::load(&data("profiles/list.toml")).unwrap();
    let err = parse_serp_html(&page("classic.html"), &profile, None).unwrap_err();
    assert!(matches!(err, FetchError::ProfileMismatch { .. }));
}

/// Serves `list.html`, answering the first `failures` requests with 503.
/// Returns the base URL and the arrival time of every request.
fn flaky_server(failures: usize) -> (String, Arc<Mutex<Vec<Instant>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let arrivals = Arc::new(Mutex::new(Vec::new()));
    let seen = arrivals.clone();
    let body = page("list.html");
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            loop {
                line.clear();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
            }
            let n = {
                let mut seen = seen.lock().unwrap();
                seen.push(Instant::now());
                seen.len()
            };
            let (status, text) = if n <= failures {
                ("503 Service Unavailable", "busy".to_string())
            } else {
                ("200 OK", body.clone())
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: text/html\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
        }
    });
    (base, arrivals)
}

fn list_adapter(base: &str) -> LiveAdapter {
    let profile = SelectorProfile::load(&data("profiles/list.toml")).unwrap();
    LiveAdapter::new("bing", &format!("{base}/search?q={{query}}"), profile).unwrap()
}

#[test]
fn live_adapter_retries_unavailable_pages() {
    let (base, arrivals) = flaky_server(2);
    let adapter = list_adapter(&base).with_retry_policy(RetryPolicy {
        max_retries: 2,
        initial_backoff: Duration::from_millis(10),
    });
    let adapters: Vec<Box<dyn EngineAdapter>> = vec![Box::new(adapter.with_min_interval(Duration::ZERO))];
    let out = collect_all("s", &["mozart".to_string()], &adapters, 10).unwrap();
    assert_eq!(out.batch.results.len(), 10);
    assert!(out.batch.failures.is_empty());
    assert_eq!(arrivals.lock().unwrap().len(), 3);
    let attempts: Vec<u32> = out.journal.iter().map(|j| j.attempt).collect();
    assert_eq!(attempts, [0, 1, 2]);
}

#[test]
fn live_adapter_gives_up_after_its_retries() {
    let (base, arrivals) = flaky_server(usize::MAX);
    let adapter = list_adapter(&base)
        .with_retry_policy(RetryPolicy {
            max_retries: 1,
            initial_backoff: Duration::from_millis(5),
        })
        .with_min_interval(Duration::ZERO);
    let adapters: Vec<Box<dyn EngineAdapter>> = vec![Box::new(adapter)];
    assert!(collect_all("s", &["a".to_string()], &adapters, 10).is_err());
    assert_eq!(arrivals.lock().unwrap().len(), 2);
}

#[test]
fn live_requests_are_spaced_by_the_engine_interval() {
    let (base, arrivals) = flaky_server(0);
    let interval = Duration::from_millis(150);
    let adapter = list_adapter(&base).with_min_interval(interval);
    let adapters: Vec<Box<dyn EngineAdapter>> = vec![Box::new(adapter)];
    let queries: Vec<String> = ["one", "two", "three", "four"].iter().map(|s| s.to_string()).collect();
    let out = collect_all("s", &queries, &adapters, 5).unwrap();
    assert_eq!(out.batch.results.len(), 20);
    let times = arrivals.lock().unwrap().clone();
    assert_eq!(times.len(), 4);
    for w in times.windows(2) {
        // server-side arrival can lag the client-side start slightly
        assert!(w[1] - w[0] >= interval - Duration::from_millis(20), "{:?}", w[1] - w[0]);
    }
    for w in out.journal.windows(2) {
        assert!(w[1].start_offset_micros - w[0].start_offset_micros >= interval.as_micros() as u64);
    }
}
